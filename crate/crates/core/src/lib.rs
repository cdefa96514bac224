//! Continuous solvency ratio monitoring from calibrated NAV proxies.

pub mod alm;
pub mod econometrics;
pub mod error;
pub mod esg;
pub mod linalg;
pub mod money;
pub mod monitor;
pub mod par;
pub mod proxy;
pub mod solvency;
pub mod stats;
pub mod transitions;

pub use error::{Error, ErrorClass, Result};
