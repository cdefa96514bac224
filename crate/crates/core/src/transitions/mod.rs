//! Risk factors and economic transitions.
//!
//! An economic transition summarises the market move between the calibration
//! date and a monitoring date as one real per monitored risk factor. The same
//! coordinates parameterise every proxy.

mod history;

pub use history::{read_rows, Field, Frequency, HistoryRow, IndexHistory, Observation};

use std::collections::HashSet;

use chrono::NaiveDate;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::empirical_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    StockLevel,
    RateLevel,
    SpreadSovereign,
    SpreadCorporate,
    StockVol,
    Illiquidity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFactorDef {
    pub id: String,
    pub kind: FactorKind,
    #[serde(default)]
    pub index_name: String,
}

impl RiskFactorDef {
    pub fn new(id: impl Into<String>, kind: FactorKind, index_name: impl Into<String>) -> Self {
        RiskFactorDef { id: id.into(), kind, index_name: index_name.into() }
    }
}

/// Ordered set of monitored risk factors (J = `len()`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorSet(Vec<RiskFactorDef>);

impl FactorSet {
    pub fn new(defs: Vec<RiskFactorDef>) -> Result<Self> {
        if defs.is_empty() {
            return Err(Error::Config("at least one risk factor is required".into()));
        }
        let mut seen = HashSet::new();
        for d in &defs {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Config(format!("duplicate risk factor id {:?}", d.id)));
            }
        }
        Ok(FactorSet(defs))
    }

    pub fn defs(&self) -> &[RiskFactorDef] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.0.iter().position(|d| d.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.0.iter().map(|d| d.id.clone()).collect()
    }

    /// The first `j` factors, in order.
    pub fn prefix(&self, j: usize) -> Result<FactorSet> {
        if j == 0 || j > self.len() {
            return Err(Error::Config(format!("cannot take {j} of {} factors", self.len())));
        }
        Ok(FactorSet(self.0[..j].to_vec()))
    }
}

/// Economic transition: one coordinate per configured factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RiskFactorVector(Vec<f64>);

impl RiskFactorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("risk factor value {v} is not finite")));
        }
        Ok(RiskFactorVector(values))
    }

    pub fn zeros(j: usize) -> Self {
        RiskFactorVector(vec![0.0; j])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub fn check_len(&self, j: usize) -> Result<()> {
        if self.0.len() != j {
            return Err(Error::Domain(format!("transition has {} coordinates, expected {j}", self.0.len())));
        }
        Ok(())
    }

    /// Copy of `self` with coordinate `j` replaced.
    pub fn with(&self, j: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[j] = value;
        RiskFactorVector(v)
    }
}

/// ln(st / s0).
pub fn compute_stock_factor(s0: f64, st: f64) -> Result<f64> {
    if !(s0 > 0.0 && st > 0.0) || !s0.is_finite() || !st.is_finite() {
        return Err(Error::Domain(format!("stock levels must be positive (s0={s0}, st={st})")));
    }
    Ok((st / s0).ln())
}

/// Average change of continuously compounded zero yields over maturities 1..=M.
pub fn compute_rate_factor(curve0: &[f64], curvet: &[f64]) -> Result<f64> {
    let maturities: Vec<f64> = (1..=curve0.len()).map(|m| m as f64).collect();
    compute_rate_factor_at(&maturities, curve0, curvet)
}

/// Rate factor for explicit maturities: (1/M) sum_m -(1/m) ln(P_t(m) / P_0(m)).
pub fn compute_rate_factor_at(maturities: &[f64], curve0: &[f64], curvet: &[f64]) -> Result<f64> {
    if curve0.is_empty() || curve0.len() != curvet.len() || curve0.len() != maturities.len() {
        return Err(Error::Domain(format!(
            "curve length mismatch ({} maturities, {} vs {} prices)",
            maturities.len(),
            curve0.len(),
            curvet.len()
        )));
    }
    if curve0.iter().chain(curvet).any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain("zero-coupon prices must be positive".into()));
    }
    let total: f64 = maturities
        .iter()
        .zip(curve0.iter().zip(curvet))
        .map(|(m, (p0, pt))| -(pt / p0).ln() / m)
        .sum();
    Ok(total / curve0.len() as f64)
}

/// Additive change of a spread, volatility or premium level.
pub fn compute_spread_factor(spread0: f64, spreadt: f64) -> Result<f64> {
    if !spread0.is_finite() || !spreadt.is_finite() {
        return Err(Error::Domain("spread levels must be finite".into()));
    }
    Ok(spreadt - spread0)
}

/// Factor value of one kind between two observations of its index.
pub fn factor_between(kind: FactorKind, id: &str, from: &Observation, to: &Observation) -> Result<f64> {
    let level = |o: &Observation| {
        o.level.ok_or_else(|| Error::Data(format!("factor {id:?} has no `level` observation")))
    };
    match kind {
        FactorKind::StockLevel => compute_stock_factor(level(from)?, level(to)?),
        FactorKind::RateLevel => {
            if from.curve.is_empty() {
                return Err(Error::Data(format!("factor {id:?} has no curve observation")));
            }
            let m0: Vec<f64> = from.curve.iter().map(|c| c.0).collect();
            let mt: Vec<f64> = to.curve.iter().map(|c| c.0).collect();
            if m0 != mt {
                return Err(Error::Data(format!("factor {id:?}: curve maturities differ between dates")));
            }
            let p0: Vec<f64> = from.curve.iter().map(|c| c.1).collect();
            let pt: Vec<f64> = to.curve.iter().map(|c| c.1).collect();
            compute_rate_factor_at(&m0, &p0, &pt)
        }
        FactorKind::SpreadSovereign | FactorKind::SpreadCorporate | FactorKind::StockVol | FactorKind::Illiquidity => {
            compute_spread_factor(level(from)?, level(to)?)
        }
    }
}

/// Transition realised between `t0` and `t` (`t0 <= t`).
pub fn realized_transition(history: &IndexHistory, factors: &FactorSet, t0: NaiveDate, t: NaiveDate) -> Result<RiskFactorVector> {
    if t < t0 {
        return Err(Error::Data(format!("monitoring date {t} precedes base date {t0}")));
    }
    let get = |date: NaiveDate, id: &str| {
        history
            .observation(date, id)
            .ok_or_else(|| Error::Data(format!("no observation of {id:?} on {date}")))
    };
    let values = factors
        .defs()
        .iter()
        .map(|f| factor_between(f.kind, &f.id, get(t0, &f.id)?, get(t, &f.id)?))
        .collect::<Result<Vec<_>>>()?;
    RiskFactorVector::new(values)
}

/// Transition from stored base observations to the observations of one date.
pub fn transition_from_base(
    base: &std::collections::BTreeMap<String, Observation>,
    current: &std::collections::BTreeMap<String, Observation>,
    factors: &FactorSet,
) -> Result<RiskFactorVector> {
    let values = factors
        .defs()
        .iter()
        .map(|f| {
            let b = base.get(&f.id).ok_or_else(|| Error::Data(format!("no base observation of {:?}", f.id)))?;
            let c = current.get(&f.id).ok_or_else(|| Error::Data(format!("no current observation of {:?}", f.id)))?;
            factor_between(f.kind, &f.id, b, c)
        })
        .collect::<Result<Vec<_>>>()?;
    RiskFactorVector::new(values)
}

/// Minimum number of historical factor outcomes for a probable space.
pub const MIN_FACTOR_OUTCOMES: usize = 8;

/// Per-factor historical quantile box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbableSpace {
    pub factor_ids: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub alpha: f64,
    pub source_window: (NaiveDate, NaiveDate),
}

impl ProbableSpace {
    pub fn new(factor_ids: Vec<String>, lo: Vec<f64>, hi: Vec<f64>, alpha: f64, source_window: (NaiveDate, NaiveDate)) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != factor_ids.len() {
            return Err(Error::Config("probable space bounds have mismatched lengths".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::Config("probable space needs lo <= hi for every factor".into()));
        }
        Ok(ProbableSpace { factor_ids, lo, hi, alpha, source_window })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Per-factor membership flags.
    pub fn membership(&self, eps: &RiskFactorVector) -> Vec<bool> {
        eps.values()
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(e, (l, h))| *l <= *e && *e <= *h)
            .collect()
    }

    pub fn contains(&self, eps: &RiskFactorVector) -> bool {
        eps.len() == self.dim() && self.membership(eps).into_iter().all(|b| b)
    }

    /// Corner selected by a per-factor worst-case direction.
    pub fn corner(&self, worst: &[Direction]) -> Result<RiskFactorVector> {
        if worst.len() != self.dim() {
            return Err(Error::Config(format!("{} worst-case directions for {} factors", worst.len(), self.dim())));
        }
        RiskFactorVector::new(
            worst
                .iter()
                .enumerate()
                .map(|(j, d)| match d {
                    Direction::Lo => self.lo[j],
                    Direction::Hi => self.hi[j],
                })
                .collect(),
        )
    }

    /// Restriction to the first `j` factors.
    pub fn prefix(&self, j: usize) -> Result<ProbableSpace> {
        if j == 0 || j > self.dim() {
            return Err(Error::Config(format!("cannot take {j} of {} factors", self.dim())));
        }
        Ok(ProbableSpace {
            factor_ids: self.factor_ids[..j].to_vec(),
            lo: self.lo[..j].to_vec(),
            hi: self.hi[..j].to_vec(),
            alpha: self.alpha,
            source_window: self.source_window,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Lo,
    Hi,
}

/// Rolling one-period factor outcomes of one factor: the transition between
/// each observation and the one `window` observations later.
pub fn factor_series(history: &IndexHistory, def: &RiskFactorDef, window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Config("transition window must be at least one observation".into()));
    }
    let dates: Vec<NaiveDate> = history.factor_dates(&def.id).collect();
    if dates.len() <= window {
        return Ok(Vec::new());
    }
    (0..dates.len() - window)
        .map(|i| {
            let from = history.observation(dates[i], &def.id).expect("date listed for factor");
            let to = history.observation(dates[i + window], &def.id).expect("date listed for factor");
            factor_between(def.kind, &def.id, from, to)
        })
        .collect()
}

/// Per-factor interval between the (1-alpha)/2 and (1+alpha)/2 empirical
/// quantiles of the rolling factor outcomes.
pub fn calibrate_probable_space(history: &IndexHistory, factors: &FactorSet, alpha: f64, window: usize) -> Result<ProbableSpace> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let (first, last) = match (history.dates().next(), history.last_date()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Calibration("empty history".into())),
    };
    let mut lo = Vec::with_capacity(factors.len());
    let mut hi = Vec::with_capacity(factors.len());
    for def in factors.defs() {
        let mut series = factor_series(history, def, window)?;
        if series.len() < MIN_FACTOR_OUTCOMES {
            return Err(Error::Calibration(format!(
                "factor {:?} yields {} outcomes, at least {MIN_FACTOR_OUTCOMES} needed",
                def.id,
                series.len()
            )));
        }
        series.sort_by(f64::total_cmp);
        lo.push(empirical_quantile(&series, (1.0 - alpha) / 2.0)?);
        hi.push(empirical_quantile(&series, (1.0 + alpha) / 2.0)?);
    }
    ProbableSpace::new(factors.ids(), lo, hi, alpha, (first, last))
}

/// `n` transitions drawn independently and uniformly over the box.
pub fn sample_transitions(space: &ProbableSpace, n: usize, seed: u64) -> Vec<RiskFactorVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let values = space
                .lo
                .iter()
                .zip(&space.hi)
                .map(|(&l, &h)| {
                    let u: f64 = rng.random();
                    (l + u * (h - l)).clamp(l, h)
                })
                .collect();
            RiskFactorVector(values)
        })
        .collect()
}

/// Out-of-sample validation scenarios walking from the zero transition to the
/// worst-case corner: scenario k (1..=steps) is (k / steps) * corner.
pub fn out_of_sample_path(space: &ProbableSpace, worst: &[Direction], steps: usize) -> Result<Vec<RiskFactorVector>> {
    if steps == 0 {
        return Err(Error::Config("out-of-sample path needs at least one step".into()));
    }
    let corner = space.corner(worst)?;
    Ok((1..=steps)
        .map(|k| {
            if k == steps {
                return corner.clone();
            }
            let w = k as f64 / steps as f64;
            RiskFactorVector(corner.values().iter().map(|c| w * c).collect())
        })
        .collect())
}
