//! Fixed-point currency amounts.
//!
//! Amounts are integers of minor units at a fixed number of decimals, so the tax
//! chain reproduces a cent-level ledger exactly. Rates multiply through an
//! integer at 1e-8 resolution with round-half-even.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const RATE_SCALE: i128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Money {
    minor: i128,
    decimals: u8,
}

fn pow10(d: u8) -> i128 {
    10_i128.pow(u32::from(d))
}

/// Integer division rounding half to even.
fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

impl Money {
    pub fn zero(decimals: u8) -> Self {
        Money { minor: 0, decimals }
    }

    pub fn from_minor(minor: i128, decimals: u8) -> Self {
        Money { minor, decimals }
    }

    /// Rounds a floating amount to the nearest minor unit.
    pub fn from_f64(x: f64, decimals: u8) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Numerical(format!("non-finite currency amount {x}")));
        }
        let scaled = (x * pow10(decimals) as f64).round();
        if scaled.abs() > 1e30 {
            return Err(Error::Numerical(format!("currency amount {x} out of range")));
        }
        Ok(Money { minor: scaled as i128, decimals })
    }

    pub fn minor(self) -> i128 {
        self.minor
    }

    pub fn decimals(self) -> u8 {
        self.decimals
    }

    pub fn to_f64(self) -> f64 {
        self.minor as f64 / pow10(self.decimals) as f64
    }

    /// Multiplies by a rate; the rate is first fixed at 1e-8 resolution.
    pub fn mul_rate(self, rate: f64) -> Self {
        let r = (rate * RATE_SCALE as f64).round() as i128;
        Money {
            minor: div_round_half_even(self.minor * r, RATE_SCALE),
            decimals: self.decimals,
        }
    }

    pub fn max(self, other: Self) -> Self {
        self.check(other);
        if self.minor >= other.minor {
            self
        } else {
            other
        }
    }

    pub fn is_positive(self) -> bool {
        self.minor > 0
    }

    pub fn is_negative(self) -> bool {
        self.minor < 0
    }

    fn check(self, other: Self) {
        assert_eq!(self.decimals, other.decimals, "mixed currency precisions");
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        self.check(rhs);
        Money { minor: self.minor + rhs.minor, decimals: self.decimals }
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        self.check(rhs);
        Money { minor: self.minor - rhs.minor, decimals: self.decimals }
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money { minor: -self.minor, decimals: self.decimals }
    }
}

impl PartialOrd for Money {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        (self.decimals == other.decimals).then(|| self.minor.cmp(&other.minor))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.decimals == 0 {
            return write!(f, "{}", self.minor);
        }
        let p = pow10(self.decimals);
        let sign = if self.minor < 0 { "-" } else { "" };
        let a = self.minor.abs();
        write!(f, "{sign}{}.{:0width$}", a / p, a % p, width = usize::from(self.decimals))
    }
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(format!("malformed currency amount {s:?}"));
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let decimals = u8::try_from(frac.len()).map_err(|_| bad())?;
        let digits = format!("{int}{frac}");
        let minor: i128 = digits.parse().map_err(|_| bad())?;
        Ok(Money { minor: if neg { -minor } else { minor }, decimals })
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tax_on_round_amount_is_exact() {
        let vif = Money::from_f64(1000.0, 2).unwrap();
        assert_eq!(vif.mul_rate(0.3443).to_string(), "344.30");
        assert_eq!(vif.mul_rate(1.0 - 0.3443).to_string(), "655.70");
    }

    #[test]
    fn half_even_rounding() {
        // 0.125 * 0.5 = 0.0625 -> 0.06 at two decimals (tie to even)
        let m = Money::from_minor(125, 3);
        assert_eq!(m.mul_rate(0.5).minor(), 62);
        let m = Money::from_minor(375, 3);
        assert_eq!(m.mul_rate(0.5).minor(), 188);
    }

    #[test]
    fn display_and_parse() {
        for s in ["0.00", "-12.05", "1600.00", "7", "-0.5"] {
            let m: Money = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("1.2.3".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = Money::from_f64(-1234.567, 2).unwrap();
        let js = serde_json::to_string(&m).unwrap();
        assert_eq!(js, "\"-1234.57\"");
        let back: Money = serde_json::from_str(&js).unwrap();
        assert_eq!(back, m);
    }
}
