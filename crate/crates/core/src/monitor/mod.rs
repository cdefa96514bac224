//! Continuous monitoring: calibration bundles, date evaluation, what-if,
//! sensitivity grids and SR attribution.

mod store;

pub use store::{ingest, AuditEntry, IngestReport, RowRejection, Store};

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::par::{map_range, ExecMode};
use crate::proxy::{evaluate, ProxyModel};
use crate::solvency::{assemble, AggNode, CapitalBasis, FrozenScr, MarginalScrSet, SolvencySnapshot, VolumeMeasure};
use crate::transitions::{transition_from_base, FactorSet, IndexHistory, Observation, ProbableSpace, RiskFactorVector};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 10;

/// NAV and SR from full ALM valuation at the calibration date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullCalcReference {
    pub nav_central: f64,
    pub nav_shocked: BTreeMap<String, f64>,
    pub sr: Option<f64>,
}

/// Everything needed to monitor between two calibrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBundle {
    pub schema_version: u32,
    /// sha256 of the canonical JSON with this field empty.
    #[serde(default)]
    pub version_id: String,
    pub calibration_date: NaiveDate,
    pub factors: FactorSet,
    /// Index observations at the calibration date; transitions are measured from these.
    pub base_observations: BTreeMap<String, Observation>,
    pub central: ProxyModel,
    /// Shocked NAV proxies keyed by shock id.
    pub shocked: BTreeMap<String, ProxyModel>,
    pub space: ProbableSpace,
    pub basis: CapitalBasis,
    pub frozen: BTreeMap<String, FrozenScr>,
    pub aggregation: AggNode,
    #[serde(default)]
    pub volume_measures: BTreeMap<String, VolumeMeasure>,
    /// Factor order used by [`marginal_attribution`].
    pub attribution_order: Vec<String>,
    #[serde(default)]
    pub full_calc: Option<FullCalcReference>,
    /// Config hash of the calibration run.
    #[serde(default)]
    pub config_hash: String,
}

impl CalibrationBundle {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Data(format!("bundle schema_version {} is not supported", self.schema_version)));
        }
        let ids = self.factors.ids();
        let check = |name: &str, m: &ProxyModel| -> Result<()> {
            if m.factor_ids != ids {
                return Err(Error::Data(format!("proxy {name} uses factors {:?}, bundle has {ids:?}", m.factor_ids)));
            }
            if m.calibration_date.is_some_and(|d| d != self.calibration_date) {
                return Err(Error::Data(format!("proxy {name} was calibrated on another date")));
            }
            Ok(())
        };
        check("central", &self.central)?;
        for (id, m) in &self.shocked {
            check(id, m)?;
        }
        if self.space.factor_ids != ids {
            return Err(Error::Data("probable space and bundle factors differ".into()));
        }
        for id in &ids {
            if !self.base_observations.contains_key(id) {
                return Err(Error::Data(format!("bundle lacks a base observation of {id:?}")));
            }
        }
        let mut order = self.attribution_order.clone();
        order.sort();
        let mut sorted = ids.clone();
        sorted.sort();
        if order != sorted {
            return Err(Error::Config(format!(
                "attribution order {:?} must list each factor exactly once",
                self.attribution_order
            )));
        }
        self.basis.validate()?;
        self.aggregation.validate()
    }

    pub fn canonical_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.version_id = String::new();
        serde_json::to_string(&c).map_err(|e| Error::Data(format!("bundle serialisation: {e}")))
    }

    pub fn compute_version(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }

    /// Sets `version_id` from the content.
    pub fn seal(mut self) -> Result<Self> {
        self.version_id = self.compute_version()?;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("bundle serialisation: {e}")))
    }

    /// Parses and checks a bundle, including its version id.
    pub fn from_json(s: &str) -> Result<Self> {
        let b: CalibrationBundle = serde_json::from_str(s).map_err(|e| Error::Data(format!("bundle document: {e}")))?;
        b.validate()?;
        let v = b.compute_version()?;
        if v != b.version_id {
            return Err(Error::Data(format!("bundle version id {} does not match content ({v})", b.version_id)));
        }
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn zero(&self) -> RiskFactorVector {
        RiskFactorVector::zeros(self.factors.len())
    }

    /// Transition with the named factors set and all others at zero.
    pub fn transition_from_map(&self, values: &BTreeMap<String, f64>) -> Result<RiskFactorVector> {
        let mut eps = self.zero();
        for (id, v) in values {
            let j = self
                .factors
                .position(id)
                .ok_or_else(|| Error::Domain(format!("unknown risk factor {id:?}")))?;
            if !v.is_finite() {
                return Err(Error::Domain(format!("factor {id} = {v} is not finite")));
            }
            eps = eps.with(j, *v);
        }
        Ok(eps)
    }

    /// Short form of the version id used in file names.
    pub fn short_version(&self) -> &str {
        &self.version_id[..self.version_id.len().min(16)]
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    InSpace,
    OutOfSpace,
}

/// Snapshot for one transition, without persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub transition: RiskFactorVector,
    pub snapshot: SolvencySnapshot,
    pub validity: Validity,
    /// Factors outside their probable-space interval.
    pub out_of_space: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringRecord {
    pub date: NaiveDate,
    pub observed: BTreeMap<String, Observation>,
    pub transition: RiskFactorVector,
    pub snapshot: SolvencySnapshot,
    pub validity: Validity,
    #[serde(default)]
    pub out_of_space: Vec<String>,
    #[serde(default)]
    pub smoothed_sr: Option<f64>,
    pub bundle_version: String,
}

/// Proxy evaluation, marginal SCRs, aggregation and the tax chain for one transition.
pub fn whatif(bundle: &CalibrationBundle, eps: &RiskFactorVector) -> Result<Evaluation> {
    eps.check_len(bundle.factors.len())?;
    let central = evaluate(&bundle.central, eps)?;
    let mut marginals = MarginalScrSet { frozen: bundle.frozen.clone(), ..Default::default() };
    for (id, proxy) in &bundle.shocked {
        marginals.insert_monitored(id, central, evaluate(proxy, eps)?);
    }
    let snapshot = assemble(central, marginals, &bundle.aggregation, &bundle.basis, &bundle.volume_measures)?;
    let out_of_space: Vec<String> = bundle
        .space
        .membership(eps)
        .iter()
        .zip(&bundle.space.factor_ids)
        .filter(|(inside, _)| !**inside)
        .map(|(_, id)| id.clone())
        .collect();
    if !out_of_space.is_empty() {
        log::warn!("transition outside the probable space on {out_of_space:?}");
    }
    let validity = if out_of_space.is_empty() { Validity::InSpace } else { Validity::OutOfSpace };
    Ok(Evaluation { transition: eps.clone(), snapshot, validity, out_of_space })
}

/// Record for date `t` from the observations stored in `history`.
pub fn evaluate_date(bundle: &CalibrationBundle, history: &IndexHistory, t: NaiveDate) -> Result<MonitoringRecord> {
    if t < bundle.calibration_date {
        return Err(Error::Data(format!("{t} precedes the calibration date {}", bundle.calibration_date)));
    }
    let current = history
        .snapshot(t)
        .ok_or_else(|| Error::Data(format!("no market data on {t}")))?;
    let eps = transition_from_base(&bundle.base_observations, current, &bundle.factors)?;
    let eval = whatif(bundle, &eps)?;
    let mut snapshot = eval.snapshot;
    snapshot.date = Some(t);
    let observed = bundle
        .factors
        .ids()
        .into_iter()
        .filter_map(|id| current.get(&id).map(|o| (id, o.clone())))
        .collect();
    Ok(MonitoringRecord {
        date: t,
        observed,
        transition: eval.transition,
        snapshot,
        validity: eval.validity,
        out_of_space: eval.out_of_space,
        smoothed_sr: None,
        bundle_version: bundle.version_id.clone(),
    })
}

/// Records for every history date after the calibration date, with the
/// smoothed series filled in. Dates that cannot be evaluated are returned
/// separately with their diagnostics.
pub fn evaluate_history(
    bundle: &CalibrationBundle,
    history: &IndexHistory,
    window: usize,
) -> Result<(Vec<MonitoringRecord>, Vec<(NaiveDate, String)>)> {
    let dates: Vec<NaiveDate> = history.dates().filter(|d| *d > bundle.calibration_date).collect();
    let mut records = Vec::with_capacity(dates.len());
    let mut skipped = Vec::new();
    for d in dates {
        match evaluate_date(bundle, history, d) {
            Ok(r) => records.push(r),
            Err(e @ (Error::Data(_) | Error::Domain(_))) => skipped.push((d, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    fill_smoothed(&mut records, window)?;
    Ok((records, skipped))
}

/// Sets `smoothed_sr` on date-ordered records.
pub fn fill_smoothed(records: &mut [MonitoringRecord], window: usize) -> Result<()> {
    let srs: Vec<Option<f64>> = records.iter().map(|r| r.snapshot.sr).collect();
    for (r, s) in records.iter_mut().zip(smoothed_sr(&srs, window)?) {
        r.smoothed_sr = s;
    }
    Ok(())
}

/// Trailing mean over the last `window` points; undefined ratios are skipped
/// and partial windows at the start use what is available.
pub fn smoothed_sr(series: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::Domain("smoothing window must be at least 1".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let vals: Vec<f64> = series[lo..=i].iter().flatten().copied().collect();
            // centred on the first value so a constant window returns that value exactly
            vals.first().map(|&v0| v0 + vals.iter().map(|v| v - v0).sum::<f64>() / vals.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub factors: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    /// `sr[i][j]` at (axes[0][i], axes[1][j]); a single column for one factor.
    pub sr: Vec<Vec<Option<f64>>>,
    pub nav_central: Vec<Vec<f64>>,
    pub out_of_space: Vec<Vec<bool>>,
}

/// SR over a one- or two-factor grid, other factors at zero.
pub fn sensitivity_grid(
    bundle: &CalibrationBundle,
    factors: &[String],
    axes: &[Vec<f64>],
    mode: ExecMode,
) -> Result<SensitivityGrid> {
    if factors.is_empty() || factors.len() > 2 || axes.len() != factors.len() {
        return Err(Error::Domain("sensitivity takes one or two factors with one axis each".into()));
    }
    if factors.len() == 2 && factors[0] == factors[1] {
        return Err(Error::Domain("sensitivity factors must be distinct".into()));
    }
    let pos = factors
        .iter()
        .map(|f| bundle.factors.position(f).ok_or_else(|| Error::Domain(format!("unknown risk factor {f:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if axes.iter().any(|a| a.is_empty() || a.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain("grid axes must be non-empty and finite".into()));
    }
    let n0 = axes[0].len();
    let n1 = axes.get(1).map_or(1, Vec::len);
    let cells = map_range(n0 * n1, mode, |c| {
        let (i, j) = (c / n1, c % n1);
        let mut eps = bundle.zero().with(pos[0], axes[0][i]);
        if let Some(&p1) = pos.get(1) {
            eps = eps.with(p1, axes[1][j]);
        }
        whatif(bundle, &eps)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityGrid {
        factors: factors.to_vec(),
        axes: axes.to_vec(),
        sr: cells.chunks(n1).map(|r| r.iter().map(|e| e.snapshot.sr).collect()).collect(),
        nav_central: cells.chunks(n1).map(|r| r.iter().map(|e| e.snapshot.nav_central.to_f64()).collect()).collect(),
        out_of_space: cells.chunks(n1).map(|r| r.iter().map(|e| e.validity == Validity::OutOfSpace).collect()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionStep {
    pub factor: String,
    pub value: f64,
    pub sr_after: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub sr_base: Option<f64>,
    pub sr_final: Option<f64>,
    pub total_delta: Option<f64>,
    pub steps: Vec<AttributionStep>,
}

/// Applies the factors one at a time in the bundle's attribution order and
/// reports the SR change at each step.
pub fn marginal_attribution(bundle: &CalibrationBundle, eps: &RiskFactorVector) -> Result<Attribution> {
    eps.check_len(bundle.factors.len())?;
    let sr_base = whatif(bundle, &bundle.zero())?.snapshot.sr;
    let mut cur = bundle.zero();
    let mut prev = sr_base;
    let mut steps = Vec::with_capacity(bundle.attribution_order.len());
    for id in &bundle.attribution_order {
        let j = bundle
            .factors
            .position(id)
            .ok_or_else(|| Error::Config(format!("attribution factor {id:?} is not monitored")))?;
        cur = cur.with(j, eps.get(j));
        let sr = whatif(bundle, &cur)?.snapshot.sr;
        let delta = prev.zip(sr).map(|(a, b)| b - a);
        steps.push(AttributionStep { factor: id.clone(), value: eps.get(j), sr_after: sr, delta });
        prev = sr;
    }
    Ok(Attribution { sr_base, sr_final: prev, total_delta: sr_base.zip(prev).map(|(a, b)| b - a), steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramFactor {
    pub id: String,
    pub current: f64,
    pub lo: f64,
    pub hi: f64,
    pub in_space: bool,
}

/// Current factor levels against the probable-space bounds.
pub fn diagram(bundle: &CalibrationBundle, eps: &RiskFactorVector) -> Result<Vec<DiagramFactor>> {
    eps.check_len(bundle.factors.len())?;
    let inside = bundle.space.membership(eps);
    Ok(bundle
        .space
        .factor_ids
        .iter()
        .enumerate()
        .map(|(j, id)| DiagramFactor {
            id: id.clone(),
            current: eps.get(j),
            lo: bundle.space.lo[j],
            hi: bundle.space.hi[j],
            in_space: inside[j],
        })
        .collect())
}

/// Hand-built two-factor bundle for tests outside this crate.
#[cfg(any(test, feature = "fixtures"))]
pub mod fixtures {
    use super::*;
    use crate::money::Money;
    use crate::proxy::{Monomial, ProxyMethod};
    use crate::solvency::{default_aggregation, FrozenRule};
    use crate::transitions::{FactorKind, RiskFactorDef};

    /// Hand-built proxy: intercept + linear terms (+ optional quadratic on factor 0).
    pub fn proxy(ids: &[String], beta: Vec<f64>, monomials: Vec<Monomial>, date: NaiveDate) -> ProxyModel {
        let k = beta.len();
        ProxyModel {
            schema_version: crate::proxy::PROXY_SCHEMA_VERSION,
            method: ProxyMethod::Lsmc,
            factor_ids: ids.to_vec(),
            monomials,
            beta,
            residuals: vec![],
            sigma2: 0.0,
            r_squared: 1.0,
            cov_homo: vec![vec![0.0; k]; k],
            cov_white: vec![vec![0.0; k]; k],
            n_primary: 0,
            p_secondary: 1,
            shock: None,
            calibration_date: Some(date),
            seed: 0,
        }
    }

    pub fn bundle() -> CalibrationBundle {
        let date = NaiveDate::from_ymd_opt(2012, 12, 31).unwrap();
        let factors = FactorSet::new(vec![
            RiskFactorDef::new("stock", FactorKind::StockLevel, "EURO STOXX 50"),
            RiskFactorDef::new("spread_corp", FactorKind::SpreadCorporate, "iTraxx"),
        ])
        .unwrap();
        let ids = factors.ids();
        let lin = vec![Monomial::new(vec![1, 0]), Monomial::new(vec![0, 1]), Monomial::new(vec![2, 0])];
        let central = proxy(&ids, vec![5000.0, 2000.0, -30000.0, -500.0], lin.clone(), date);
        let mut shocked = BTreeMap::new();
        shocked.insert("ir_up".to_string(), proxy(&ids, vec![4300.0, 2000.0, -31000.0, -500.0], lin.clone(), date));
        shocked.insert("ir_down".to_string(), proxy(&ids, vec![4032.0, 2100.0, -29000.0, -400.0], lin.clone(), date));
        shocked.insert("stock_global".to_string(), proxy(&ids, vec![3500.0, 1500.0, -30000.0, -400.0], lin.clone(), date));
        shocked.insert("stock_other".to_string(), proxy(&ids, vec![4600.0, 1900.0, -30000.0, -500.0], lin.clone(), date));
        shocked.insert("spread".to_string(), proxy(&ids, vec![4200.0, 2000.0, -32000.0, -500.0], lin.clone(), date));
        shocked.insert("illiquidity".to_string(), proxy(&ids, vec![4700.0, 2000.0, -29000.0, -500.0], lin, date));
        let mut frozen = BTreeMap::new();
        let fz = |v: f64| FrozenScr { value: v, rule: FrozenRule::Frozen };
        frozen.insert("property".into(), fz(94.3));
        frozen.insert("concentration".into(), fz(66.1));
        frozen.insert("currency".into(), fz(12.7));
        frozen.insert("default".into(), fz(80.0));
        frozen.insert(
            "life".into(),
            FrozenScr { value: 150.0, rule: FrozenRule::ProportionalTo { measure: "technical_provisions".into() } },
        );
        frozen.insert("health".into(), fz(0.0));
        frozen.insert("non_life".into(), fz(0.0));
        let mut volume_measures = BTreeMap::new();
        volume_measures.insert("technical_provisions".into(), VolumeMeasure { base: 90_000.0, current: 90_000.0 });
        let obs = |level: f64| Observation { level: Some(level), curve: vec![] };
        let mut base = BTreeMap::new();
        base.insert("stock".to_string(), obs(2635.93));
        base.insert("spread_corp".to_string(), obs(0.0117));
        let m = |s: &str| -> Money { s.parse().unwrap() };
        CalibrationBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            version_id: String::new(),
            calibration_date: date,
            factors,
            base_observations: base,
            central,
            shocked,
            space: ProbableSpace::new(ids.clone(), vec![-0.2, -0.005], vec![0.15, 0.006], 0.95, (date, date)).unwrap(),
            basis: CapitalBasis {
                tier_one_of: m("3000.00"),
                subordinated_debt: m("500.00"),
                fin_mgmt_fees: m("100.00"),
                itr_nb: m("50.00"),
                scr_op_0: m("60.00"),
                tax_rate: crate::solvency::DEFAULT_TAX_RATE,
            },
            frozen,
            aggregation: default_aggregation(),
            volume_measures,
            attribution_order: vec!["spread_corp".into(), "stock".into()],
            full_calc: None,
            config_hash: String::new(),
        }
        .seal()
        .unwrap()
    }
}
