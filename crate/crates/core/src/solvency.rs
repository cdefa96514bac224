//! Standard Formula assembly: marginal SCRs, correlation aggregation, the tax
//! adjustment chain and the solvency ratio.
//!
//! Aggregation runs in `f64` (it takes square roots); everything from the BSCR
//! onward is carried in [`Money`] so the chain matches a cent-level ledger.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, from_rows};
use crate::money::Money;

pub const DEFAULT_TAX_RATE: f64 = 0.3443;

/// Interest/equity/property/spread correlation used in the market block.
const A: f64 = 0.5;

/// `max(0, central - shocked)`; the flag is set when the floor bites.
pub fn marginal_scr(nav_central: f64, nav_shocked: f64) -> (f64, bool) {
    let d = nav_central - nav_shocked;
    if d < 0.0 {
        (0.0, true)
    } else {
        (d, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FrozenRule {
    Frozen,
    /// Scaled by current/base of the named volume measure.
    ProportionalTo { measure: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenScr {
    pub value: f64,
    #[serde(flatten)]
    pub rule: FrozenRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeasure {
    pub base: f64,
    pub current: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarginalScrSet {
    /// Proxy-driven sub-modules keyed by shock id.
    pub monitored: BTreeMap<String, f64>,
    pub frozen: BTreeMap<String, FrozenScr>,
    /// Monitored ids whose shocked NAV exceeded the central NAV.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub floored: Vec<String>,
}

impl MarginalScrSet {
    pub fn validate(&self) -> Result<()> {
        for (id, v) in &self.monitored {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Domain(format!("marginal SCR {id} = {v} must be finite and >= 0")));
            }
            if self.frozen.contains_key(id) {
                return Err(Error::Config(format!("sub-module {id} is both monitored and frozen")));
            }
        }
        for (id, f) in &self.frozen {
            if !(f.value.is_finite() && f.value >= 0.0) {
                return Err(Error::Domain(format!("frozen SCR {id} = {} must be finite and >= 0", f.value)));
            }
        }
        Ok(())
    }

    /// Value of a leaf, monitored first.
    pub fn get(&self, id: &str) -> Option<f64> {
        self.monitored.get(id).copied().or_else(|| self.frozen.get(id).map(|f| f.value))
    }

    pub fn insert_monitored(&mut self, id: &str, nav_central: f64, nav_shocked: f64) {
        let (v, floored) = marginal_scr(nav_central, nav_shocked);
        if floored {
            self.floored.push(id.to_string());
        }
        self.monitored.insert(id.to_string(), v);
    }
}

/// Rescales proportional frozen entries by their measure's current/base ratio.
pub fn update_frozen(
    marginals: &MarginalScrSet,
    measures: &BTreeMap<String, VolumeMeasure>,
) -> Result<MarginalScrSet> {
    let mut out = marginals.clone();
    for (id, f) in out.frozen.iter_mut() {
        if let FrozenRule::ProportionalTo { measure } = &f.rule {
            let m = measures
                .get(measure)
                .ok_or_else(|| Error::Config(format!("sub-module {id} needs volume measure {measure:?}")))?;
            if !(m.base > 0.0 && m.base.is_finite() && m.current.is_finite() && m.current >= 0.0) {
                return Err(Error::Config(format!(
                    "volume measure {measure:?} must have a positive base and non-negative current value"
                )));
            }
            f.value *= m.current / m.base;
        }
    }
    Ok(out)
}

/// Checks the shape a Standard Formula correlation matrix must have.
pub fn validate_correlation(c: &DMatrix<f64>, dim: usize) -> Result<()> {
    if c.nrows() != dim || c.ncols() != dim {
        return Err(Error::Config(format!(
            "correlation matrix is {}x{} but {dim} sub-modules are aggregated",
            c.nrows(),
            c.ncols()
        )));
    }
    if asymmetry(c) > 1e-12 {
        return Err(Error::Config("correlation matrix is not symmetric".into()));
    }
    for i in 0..dim {
        if c[(i, i)] != 1.0 {
            return Err(Error::Config(format!("correlation diagonal entry {i} is {}", c[(i, i)])));
        }
        for j in 0..dim {
            if !(-1.0..=1.0).contains(&c[(i, j)]) {
                return Err(Error::Config(format!("correlation entry ({i},{j}) = {} outside [-1,1]", c[(i, j)])));
            }
        }
    }
    Ok(())
}

/// sqrt(s' C s).
pub fn quadratic_aggregate(s: &[f64], c: &DMatrix<f64>) -> Result<f64> {
    validate_correlation(c, s.len())?;
    let mut q = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            q += s[i] * c[(i, j)] * s[j];
        }
    }
    let scale: f64 = s.iter().map(|v| v * v).sum();
    if q < 0.0 {
        // A non-PSD matrix can drive the form negative; tolerate rounding only.
        if q < -1e-12 * scale {
            return Err(Error::Numerical(format!("negative aggregated variance {q}")));
        }
        q = 0.0;
    }
    Ok(q.sqrt())
}

/// One node of the aggregation tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggNode {
    Leaf { id: String },
    /// Largest child, as for the up/down interest rate pair.
    Max { id: String, children: Vec<AggNode> },
    Correlated { id: String, children: Vec<AggNode>, matrix: Vec<Vec<f64>> },
}

impl AggNode {
    pub fn id(&self) -> &str {
        match self {
            AggNode::Leaf { id } | AggNode::Max { id, .. } | AggNode::Correlated { id, .. } => id,
        }
    }

    pub fn leaf(id: &str) -> Self {
        AggNode::Leaf { id: id.into() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AggNode::Leaf { .. } => Ok(()),
            AggNode::Max { id, children } => {
                if children.is_empty() {
                    return Err(Error::Config(format!("max node {id} has no children")));
                }
                children.iter().try_for_each(AggNode::validate)
            }
            AggNode::Correlated { children, matrix, .. } => {
                validate_correlation(&from_rows(matrix)?, children.len())?;
                children.iter().try_for_each(AggNode::validate)
            }
        }
    }

    /// Leaf ids in depth-first order.
    pub fn leaves(&self) -> Vec<&str> {
        match self {
            AggNode::Leaf { id } => vec![id.as_str()],
            AggNode::Max { children, .. } | AggNode::Correlated { children, .. } => {
                children.iter().flat_map(AggNode::leaves).collect()
            }
        }
    }

    /// Evaluates the subtree; every node value is also written to `trace`.
    pub fn evaluate(&self, marginals: &MarginalScrSet, trace: &mut BTreeMap<String, f64>) -> Result<f64> {
        let v = match self {
            AggNode::Leaf { id } => marginals
                .get(id)
                .ok_or_else(|| Error::Config(format!("no marginal SCR supplied for sub-module {id}")))?,
            AggNode::Max { children, .. } => {
                let mut best = f64::NEG_INFINITY;
                for c in children {
                    best = best.max(c.evaluate(marginals, trace)?);
                }
                best
            }
            AggNode::Correlated { children, matrix, .. } => {
                let s = children
                    .iter()
                    .map(|c| c.evaluate(marginals, trace))
                    .collect::<Result<Vec<f64>>>()?;
                quadratic_aggregate(&s, &from_rows(matrix)?)?
            }
        };
        trace.insert(self.id().to_string(), v);
        Ok(v)
    }
}

/// Market block order: interest, equity, property, spread, currency,
/// concentration, illiquidity.
pub fn default_market_matrix() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, A, A, A, 0.25, 0.0, 0.0],
        vec![A, 1.0, 0.75, 0.75, 0.25, 0.0, 0.0],
        vec![A, 0.75, 1.0, 0.5, 0.25, 0.0, 0.0],
        vec![A, 0.75, 0.5, 1.0, 0.25, 0.0, -0.5],
        vec![0.25, 0.25, 0.25, 0.25, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 1.0],
    ]
}

/// Top level order: market, default, life, health, non-life.
pub fn default_bscr_matrix() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.25, 0.25, 0.25, 0.25],
        vec![0.25, 1.0, 0.25, 0.25, 0.5],
        vec![0.25, 0.25, 1.0, 0.25, 0.0],
        vec![0.25, 0.25, 0.25, 1.0, 0.0],
        vec![0.25, 0.5, 0.0, 0.0, 1.0],
    ]
}

pub fn default_market_node() -> AggNode {
    AggNode::Correlated {
        id: "market".into(),
        children: vec![
            AggNode::Max {
                id: "interest".into(),
                children: vec![AggNode::leaf("ir_up"), AggNode::leaf("ir_down")],
            },
            AggNode::Correlated {
                id: "equity".into(),
                children: vec![AggNode::leaf("stock_global"), AggNode::leaf("stock_other")],
                matrix: vec![vec![1.0, 0.75], vec![0.75, 1.0]],
            },
            AggNode::leaf("property"),
            AggNode::leaf("spread"),
            AggNode::leaf("currency"),
            AggNode::leaf("concentration"),
            AggNode::leaf("illiquidity"),
        ],
        matrix: default_market_matrix(),
    }
}

pub fn default_aggregation() -> AggNode {
    AggNode::Correlated {
        id: "bscr".into(),
        children: vec![
            default_market_node(),
            AggNode::leaf("default"),
            AggNode::leaf("life"),
            AggNode::leaf("health"),
            AggNode::leaf("non_life"),
        ],
        matrix: default_bscr_matrix(),
    }
}

/// BSCR with the value of every intermediate node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BscrBreakdown {
    pub bscr: f64,
    pub nodes: BTreeMap<String, f64>,
}

pub fn aggregate_bscr(marginals: &MarginalScrSet, tree: &AggNode) -> Result<BscrBreakdown> {
    marginals.validate()?;
    tree.validate()?;
    let mut nodes = BTreeMap::new();
    let bscr = tree.evaluate(marginals, &mut nodes)?;
    Ok(BscrBreakdown { bscr, nodes })
}

fn default_tax_rate() -> f64 {
    DEFAULT_TAX_RATE
}

/// Calibration-date capital items held fixed over the monitoring period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalBasis {
    pub tier_one_of: Money,
    pub subordinated_debt: Money,
    pub fin_mgmt_fees: Money,
    pub itr_nb: Money,
    pub scr_op_0: Money,
    #[serde(default = "default_tax_rate")]
    pub tax_rate: f64,
}

impl CapitalBasis {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tax_rate) {
            return Err(Error::Config(format!("tax rate {} outside [0,1)", self.tax_rate)));
        }
        let d = self.tier_one_of.decimals();
        for (name, m) in [
            ("subordinated_debt", self.subordinated_debt),
            ("fin_mgmt_fees", self.fin_mgmt_fees),
            ("itr_nb", self.itr_nb),
            ("scr_op_0", self.scr_op_0),
        ] {
            if m.decimals() != d {
                return Err(Error::Config(format!(
                    "{name} has {} decimals but tier_one_of has {d}",
                    m.decimals()
                )));
            }
        }
        Ok(())
    }

    pub fn decimals(&self) -> u8 {
        self.tier_one_of.decimals()
    }

    /// tier one + subordinated debt - financial management fees.
    pub fn fixed_own_funds(&self) -> Money {
        self.tier_one_of + self.subordinated_debt - self.fin_mgmt_fees
    }
}

pub fn vif_approx(nav_central: Money, basis: &CapitalBasis) -> Money {
    nav_central - basis.fixed_own_funds()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFlag {
    NegativeVif,
    /// SCR <= 0: the ratio is left undefined.
    NonPositiveScr,
    FlooredMarginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvencySnapshot {
    pub date: Option<NaiveDate>,
    pub nav_central: Money,
    pub vif: Money,
    pub dtl: Money,
    pub adj: Money,
    pub bscr: Money,
    pub scr: Money,
    pub own_funds: Money,
    pub sr: Option<f64>,
    pub marginals: MarginalScrSet,
    #[serde(default)]
    pub nodes: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: Vec<SnapshotFlag>,
}

impl SolvencySnapshot {
    pub const CSV_HEADER: &'static str = "date,nav_central,vif,dtl,adj,bscr,scr,own_funds,sr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.date.map(|d| d.to_string()).unwrap_or_default(),
            self.nav_central,
            self.vif,
            self.dtl,
            self.adj,
            self.bscr,
            self.scr,
            self.own_funds,
            self.sr.map(|s| format!("{s:.10}")).unwrap_or_default()
        )
    }
}

/// VIF, DTL, Adj, SCR, OF and SR from the central NAV and an aggregated BSCR.
pub fn solvency_chain(nav_central: Money, basis: &CapitalBasis, bscr: Money) -> SolvencySnapshot {
    let vif = vif_approx(nav_central, basis);
    let dtl = vif.mul_rate(basis.tax_rate);
    let adj = basis.itr_nb + dtl;
    let scr = bscr + basis.scr_op_0 - adj;
    let own_funds = basis.fixed_own_funds() + vif - dtl;
    let mut flags = Vec::new();
    if vif.is_negative() {
        log::warn!("negative value of in-force {vif}");
        flags.push(SnapshotFlag::NegativeVif);
    }
    let sr = if scr.is_positive() {
        Some(own_funds.minor() as f64 / scr.minor() as f64)
    } else {
        flags.push(SnapshotFlag::NonPositiveScr);
        None
    };
    SolvencySnapshot {
        date: None,
        nav_central,
        vif,
        dtl,
        adj,
        bscr,
        scr,
        own_funds,
        sr,
        marginals: MarginalScrSet::default(),
        nodes: BTreeMap::new(),
        flags,
    }
}

/// Full assembly from NAV values already expressed in currency units.
pub fn assemble(
    nav_central: f64,
    marginals: MarginalScrSet,
    tree: &AggNode,
    basis: &CapitalBasis,
    measures: &BTreeMap<String, VolumeMeasure>,
) -> Result<SolvencySnapshot> {
    let marginals = update_frozen(&marginals, measures)?;
    let agg = aggregate_bscr(&marginals, tree)?;
    let d = basis.decimals();
    let mut snap = solvency_chain(Money::from_f64(nav_central, d)?, basis, Money::from_f64(agg.bscr, d)?);
    if !marginals.floored.is_empty() {
        snap.flags.push(SnapshotFlag::FlooredMarginal);
    }
    snap.marginals = marginals;
    snap.nodes = agg.nodes;
    Ok(snap)
}
