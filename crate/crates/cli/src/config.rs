//! The single run configuration file.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Command-line flags override the scalar fields they name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use srmon_core::alm::{Portfolio, ShockId, ShockSpec};
use srmon_core::esg::MarketState;
use srmon_core::monitor::sha256_hex;
use srmon_core::proxy::ProxyMethod;
use srmon_core::solvency::{
    default_aggregation, AggNode, CapitalBasis, FrozenScr, VolumeMeasure,
};
use srmon_core::transitions::{Direction, FactorSet, Frequency, IndexHistory, RiskFactorDef};
use srmon_core::{Error, Result};

fn default_alpha() -> f64 {
    0.95
}
fn default_transition_window() -> usize {
    63
}
fn default_horizon() -> usize {
    20
}
fn default_degree_cap() -> u32 {
    3
}
fn default_smoothing() -> usize {
    srmon_core::monitor::DEFAULT_SMOOTHING_WINDOW
}
fn default_steps() -> usize {
    10
}
fn default_method() -> ProxyMethod {
    ProxyMethod::Lsmc
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub portfolio: PathBuf,
    pub market: PathBuf,
    pub history: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub n: usize,
    #[serde(default = "one")]
    pub p: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Secondary paths per full calculation.
    pub p_full: usize,
    /// Worst-case direction per factor id.
    pub worst: BTreeMap<String, Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub lsmc_n: usize,
    pub cf_n: usize,
    pub cf_p: usize,
    /// Size of the evaluation set for interval-length counts.
    pub eval_n: usize,
    #[serde(default = "default_alpha")]
    pub ci_level: f64,
    /// Factors are added in config order up to this count.
    pub j_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolvencyConfig {
    pub basis: CapitalBasis,
    #[serde(default)]
    pub frozen: BTreeMap<String, FrozenScr>,
    #[serde(default)]
    pub volume_measures: BTreeMap<String, VolumeMeasure>,
    /// Replaces the default aggregation tree.
    #[serde(default)]
    pub aggregation: Option<AggNode>,
    /// Overrides only the market block matrix of the default tree.
    #[serde(default)]
    pub market_correlation: Option<Vec<Vec<f64>>>,
    /// Overrides only the top-level matrix of the default tree.
    #[serde(default)]
    pub bscr_correlation: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub calibration_date: NaiveDate,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Observations per one-period transition in the history.
    #[serde(default = "default_transition_window")]
    pub transition_window: usize,
    #[serde(default)]
    pub frequency: Frequency,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: u32,
    #[serde(default = "default_smoothing")]
    pub smoothing_window: usize,
    /// Proxy family stored in the bundle.
    #[serde(default = "default_method")]
    pub bundle_method: ProxyMethod,
    pub paths: Paths,
    pub factors: Vec<RiskFactorDef>,
    pub lsmc: Budget,
    pub cf: Budget,
    pub validation: ValidationConfig,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    /// Monitored shocks; missing parameters take Standard Formula defaults.
    pub shocks: Vec<ShockSpec>,
    pub solvency: SolvencyConfig,
    /// Factor order for SR attribution; defaults to the factor order.
    #[serde(default)]
    pub attribution_order: Vec<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Scalar overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(s).map_err(|e| Error::Config(format!("run config: {e}")))?;
        c.base_dir = base_dir.to_path_buf();
        if c.attribution_order.is_empty() {
            c.attribution_order = c.factors.iter().map(|f| f.id.clone()).collect();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&s, &base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            // flags are relative to the working directory, not the config file
            self.out_dir = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.factor_set()?;
        if self.lsmc.n == 0 || self.cf.n == 0 || self.cf.p == 0 || self.validation.p_full == 0 {
            return Err(Error::Config("N and P must be at least 1".into()));
        }
        if self.lsmc.p != 1 {
            return Err(Error::Config("LSMC uses one secondary path per transition (lsmc.p = 1)".into()));
        }
        for id in self.validation.worst.keys() {
            if fs.position(id).is_none() {
                return Err(Error::Config(format!("validation.worst names unknown factor {id:?}")));
            }
        }
        if self.validation.worst.len() != fs.len() {
            return Err(Error::Config("validation.worst needs a direction for every factor".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.shocks {
            s.validate()?;
            if !seen.insert(s.id()) {
                return Err(Error::Config(format!("shock {} listed twice", s.id())));
            }
        }
        if let Some(c) = &self.compare {
            if c.lsmc_n != c.cf_n * c.cf_p {
                return Err(Error::Config(format!(
                    "equal budget requires compare.lsmc_n = compare.cf_n * compare.cf_p ({} != {} * {})",
                    c.lsmc_n, c.cf_n, c.cf_p
                )));
            }
            if c.j_max == 0 || c.j_max > fs.len() {
                return Err(Error::Config(format!("compare.j_max must lie in 1..={}", fs.len())));
            }
            if c.eval_n == 0 {
                return Err(Error::Config("compare.eval_n must be at least 1".into()));
            }
        }
        self.solvency.basis.validate()?;
        let tree = self.aggregation()?;
        tree.validate()?;
        let monitored: Vec<&str> = self.shocks.iter().map(|s| s.id().as_str()).collect();
        for leaf in tree.leaves() {
            let m = monitored.contains(&leaf);
            let f = self.solvency.frozen.contains_key(leaf);
            if m && f {
                return Err(Error::Config(format!("sub-module {leaf} is both monitored and frozen")));
            }
            if !m && !f {
                return Err(Error::Config(format!("sub-module {leaf} is neither monitored nor given a frozen SCR")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn factor_set(&self) -> Result<FactorSet> {
        FactorSet::new(self.factors.clone())
    }

    pub fn worst(&self) -> Result<Vec<Direction>> {
        self.factors
            .iter()
            .map(|f| {
                self.validation
                    .worst
                    .get(&f.id)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("no worst-case direction for {:?}", f.id)))
            })
            .collect()
    }

    pub fn shock_ids(&self) -> Vec<ShockId> {
        self.shocks.iter().map(ShockSpec::id).collect()
    }

    /// Default tree with configured matrix overrides; interest directions that
    /// are not monitored are dropped from the max node.
    pub fn aggregation(&self) -> Result<AggNode> {
        if let Some(a) = &self.solvency.aggregation {
            return Ok(a.clone());
        }
        let mut tree = default_aggregation();
        let ir: Vec<String> = self
            .shock_ids()
            .into_iter()
            .filter(|s| matches!(s, ShockId::IrUp | ShockId::IrDown))
            .map(|s| s.as_str().to_string())
            .collect();
        if let AggNode::Correlated { children, matrix, .. } = &mut tree {
            if let Some(m) = &self.solvency.bscr_correlation {
                *matrix = m.clone();
            }
            if let Some(AggNode::Correlated { children: market, matrix: mm, .. }) = children.first_mut() {
                if let Some(m) = &self.solvency.market_correlation {
                    *mm = m.clone();
                }
                if let Some(AggNode::Max { children: dirs, .. }) = market.first_mut() {
                    if !ir.is_empty() {
                        dirs.retain(|c| ir.iter().any(|i| i == c.id()));
                    }
                }
            }
        }
        Ok(tree)
    }

    /// sha256 of the canonical JSON of the effective configuration. The output
    /// directory does not affect results and is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
    }

    pub fn load_portfolio(&self) -> Result<Portfolio> {
        Portfolio::load(&self.resolve(&self.paths.portfolio))
    }

    pub fn load_market(&self) -> Result<MarketState> {
        let p = self.resolve(&self.paths.market);
        let s = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let m: MarketState = toml::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load_history(&self) -> Result<IndexHistory> {
        let p = self.resolve(&self.paths.history);
        let f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        IndexHistory::read_csv(f, self.frequency).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", p.display())),
            other => other,
        })
    }
}
