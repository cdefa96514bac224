//! Batch commands behind the `srmon` subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use srmon_core::alm::{AlmModel, ShockId, ShockSpec};
use srmon_core::econometrics::{
    breusch_pagan, compare_interval_lengths, loewner_compare, BreuschPagan, CovarianceKind, IntervalComparison,
    LoewnerOrder,
};
use srmon_core::linalg::symmetric_eigenvalues;
use srmon_core::monitor::{
    diagram, evaluate_history, whatif, CalibrationBundle, DiagramFactor, Evaluation, FullCalcReference,
    MonitoringRecord, BUNDLE_SCHEMA_VERSION,
};
use srmon_core::par::{try_map_range, ExecMode};
use srmon_core::proxy::{
    build_design, calibrate_cf, calibrate_lsmc, validate as validate_proxy, CalibrationOptions, ProxyMethod, ProxyModel,
    ValidationRow,
};
use srmon_core::solvency::{assemble, MarginalScrSet, SolvencySnapshot};
use srmon_core::transitions::{
    calibrate_probable_space, out_of_sample_path, sample_transitions, IndexHistory, Observation, ProbableSpace,
    RiskFactorVector,
};
use srmon_core::{Error, Result};

use crate::config::RunConfig;

// Offsets separating the random streams of one run.
const STREAM_LSMC_TRANSITIONS: u64 = 1;
const STREAM_LSMC_PATHS: u64 = 2;
const STREAM_CF_TRANSITIONS: u64 = 3;
const STREAM_CF_PATHS: u64 = 4;
const STREAM_FULL_CALC: u64 = 5;
const STREAM_EVAL: u64 = 6;
/// Block used by the calibration-date full calculation.
const ZERO_BLOCK: usize = 1 << 20;

fn stream(seed: u64, k: u64) -> u64 {
    seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn shock_label(id: ShockId) -> &'static str {
    match id {
        ShockId::IrUp => "IR up shocked NAV",
        ShockId::IrDown => "IR down shocked NAV",
        ShockId::StockGlobal => "Global stock shocked NAV",
        ShockId::StockOther => "Other stock shocked NAV",
        ShockId::Spread => "Spread shocked NAV",
        ShockId::Illiquidity => "Illiquidity shocked NAV",
    }
}

pub const CENTRAL_LABEL: &str = "Central NAV";

/// Loaded inputs shared by the commands.
pub struct Context {
    pub config: RunConfig,
    pub alm: AlmModel,
    pub history: IndexHistory,
    pub space: ProbableSpace,
    pub base_observations: BTreeMap<String, Observation>,
}

impl Context {
    pub fn load(config: RunConfig) -> Result<Self> {
        let factors = config.factor_set()?;
        let portfolio = config.load_portfolio()?;
        let market = config.load_market()?;
        let history = config.load_history()?;
        let cal = config.calibration_date;
        let base_observations = history
            .snapshot(cal)
            .cloned()
            .ok_or_else(|| Error::Data(format!("history has no observations on the calibration date {cal}")))?;
        let first = history.dates().next().expect("history has the calibration date");
        let space = calibrate_probable_space(&history.window(first, cal), &factors, config.alpha, config.transition_window)?;
        let alm = AlmModel::new(portfolio, market, factors, config.horizon)?;
        Ok(Context { config, alm, history, space, base_observations })
    }

    fn options(&self, seed: u64) -> CalibrationOptions {
        CalibrationOptions {
            degree_cap: self.config.degree_cap,
            seed,
            calibration_date: Some(self.config.calibration_date),
            mode: ExecMode::Parallel,
        }
    }

    fn shocks(&self) -> Vec<Option<ShockSpec>> {
        std::iter::once(None).chain(self.config.shocks.iter().cloned().map(Some)).collect()
    }
}

fn label_of(shock: &Option<ShockSpec>) -> String {
    shock.as_ref().map_or(CENTRAL_LABEL.to_string(), |s| shock_label(s.id()).to_string())
}

/// Central plus one proxy per monitored shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyFamily {
    pub method: ProxyMethod,
    pub central: ProxyModel,
    pub shocked: BTreeMap<String, ProxyModel>,
}

impl ProxyFamily {
    fn get(&self, shock: &Option<ShockSpec>) -> &ProxyModel {
        match shock {
            None => &self.central,
            Some(s) => &self.shocked[s.id().as_str()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySummary {
    pub label: String,
    pub method: ProxyMethod,
    pub regressors: Vec<String>,
    pub r_squared: f64,
    pub sigma2: f64,
}

fn summarise(family: &ProxyFamily, shocks: &[Option<ShockSpec>]) -> Vec<ProxySummary> {
    shocks
        .iter()
        .map(|s| {
            let m = family.get(s);
            ProxySummary {
                label: label_of(s),
                method: m.method,
                regressors: m.labels(),
                r_squared: m.r_squared,
                sigma2: m.sigma2,
            }
        })
        .collect()
}

/// Full-calculation NAVs on the validation scenarios, per proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTable {
    pub scenarios: Vec<RiskFactorVector>,
    pub p_full: usize,
    pub lsmc: Vec<ValidationRow>,
    pub cf: Vec<ValidationRow>,
    /// Standard errors of the full-calculation NAVs, one row per proxy.
    pub full_standard_errors: Vec<Vec<f64>>,
}

impl ValidationTable {
    pub fn central(&self, method: ProxyMethod) -> &ValidationRow {
        let rows = match method {
            ProxyMethod::Lsmc => &self.lsmc,
            ProxyMethod::Cf => &self.cf,
        };
        &rows[0]
    }

    /// Relative deviations in percent, one line per proxy.
    pub fn render(&self, method: ProxyMethod) -> String {
        let rows = match method {
            ProxyMethod::Lsmc => &self.lsmc,
            ProxyMethod::Cf => &self.cf,
        };
        let mut s = String::new();
        let _ = write!(s, "{:<28}", "Validation scenarios");
        for k in 1..=self.scenarios.len() {
            let _ = write!(s, "{k:>9}");
        }
        s.push('\n');
        for r in rows {
            let _ = write!(s, "{:<28}", r.label);
            for d in &r.deviations {
                match d {
                    Some(v) => {
                        let _ = write!(s, "{:>8.2}%", 100.0 * v);
                    }
                    None => {
                        let _ = write!(s, "{:>9}", "n/a");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,proxy");
        for k in 1..=self.scenarios.len() {
            let _ = write!(s, ",s{k}");
        }
        s.push('\n');
        for (name, rows) in [("lsmc", &self.lsmc), ("cf", &self.cf)] {
            for r in rows {
                let _ = write!(s, "{name},{}", r.label);
                for d in &r.deviations {
                    let _ = write!(s, ",{}", d.map(|v| format!("{v:.6}")).unwrap_or_default());
                }
                s.push('\n');
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config_hash: String,
    pub bundle_version: String,
    pub seed: u64,
    pub space: ProbableSpace,
    pub proxies: Vec<ProxySummary>,
    pub validation: ValidationTable,
    pub full_calc: FullCalcReference,
    pub calibration_snapshot: SolvencySnapshot,
}

pub struct CalibrationOutput {
    pub bundle: CalibrationBundle,
    pub lsmc: ProxyFamily,
    pub cf: ProxyFamily,
    pub report: CalibrationReport,
}

fn calibrate_family(ctx: &Context, method: ProxyMethod, lsmc: Option<&ProxyFamily>) -> Result<ProxyFamily> {
    let cfg = &ctx.config;
    let mut central = None;
    let mut shocked = BTreeMap::new();
    let (transitions, paths_seed) = match method {
        ProxyMethod::Lsmc => (sample_transitions(&ctx.space, cfg.lsmc.n, stream(cfg.seed, STREAM_LSMC_TRANSITIONS)), STREAM_LSMC_PATHS),
        ProxyMethod::Cf => (sample_transitions(&ctx.space, cfg.cf.n, stream(cfg.seed, STREAM_CF_TRANSITIONS)), STREAM_CF_PATHS),
    };
    // the same path seed for every shock gives common random numbers
    let opts = ctx.options(stream(cfg.seed, paths_seed));
    for shock in ctx.shocks() {
        let t = Instant::now();
        let model = match (method, lsmc) {
            (ProxyMethod::Lsmc, _) => calibrate_lsmc(&ctx.alm, &transitions, shock.as_ref(), &opts)?,
            (ProxyMethod::Cf, Some(l)) => {
                let monomials = l.get(&shock).monomials.clone();
                calibrate_cf(&ctx.alm, &transitions, cfg.cf.p, monomials, shock.as_ref(), &opts)?
            }
            (ProxyMethod::Cf, None) => return Err(Error::Config("CF calibration reuses the LSMC regressors".into())),
        };
        log::info!("{method:?} {} calibrated in {:.1}s ({} regressors)", label_of(&shock), t.elapsed().as_secs_f64(), model.k());
        match &shock {
            None => central = Some(model),
            Some(s) => {
                shocked.insert(s.id().as_str().to_string(), model);
            }
        }
    }
    Ok(ProxyFamily { method, central: central.expect("central proxy is calibrated first"), shocked })
}

/// Full-calculation NAVs at the given transitions: one row per shock (central first).
fn full_calc(ctx: &Context, scenarios: &[RiskFactorVector], first_block: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let cfg = &ctx.config;
    let seed = stream(cfg.seed, STREAM_FULL_CALC);
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for shock in ctx.shocks() {
        let est = try_map_range(scenarios.len(), ExecMode::Sequential, |k| {
            ctx.alm.nav_estimate(&scenarios[k], shock.as_ref(), cfg.validation.p_full, seed, first_block + k, ExecMode::Parallel)
        })?;
        means.push(est.iter().map(|e| e.mean).collect());
        ses.push(est.iter().map(|e| e.standard_error).collect());
    }
    Ok((means, ses))
}

fn validation_table(ctx: &Context, lsmc: &ProxyFamily, cf: &ProxyFamily) -> Result<ValidationTable> {
    let cfg = &ctx.config;
    let scenarios = out_of_sample_path(&ctx.space, &cfg.worst()?, cfg.validation.steps)?;
    let (full, ses) = full_calc(ctx, &scenarios, 0)?;
    let mut rows_l = Vec::new();
    let mut rows_c = Vec::new();
    for (shock, f) in ctx.shocks().iter().zip(&full) {
        let label = label_of(shock);
        rows_l.push(validate_proxy(lsmc.get(shock), &label, &scenarios, f)?);
        rows_c.push(validate_proxy(cf.get(shock), &label, &scenarios, f)?);
    }
    Ok(ValidationTable { scenarios, p_full: cfg.validation.p_full, lsmc: rows_l, cf: rows_c, full_standard_errors: ses })
}

fn full_calc_reference(ctx: &Context) -> Result<(FullCalcReference, SolvencySnapshot)> {
    let cfg = &ctx.config;
    let zero = RiskFactorVector::zeros(ctx.alm.factors.len());
    let (full, _) = full_calc(ctx, std::slice::from_ref(&zero), ZERO_BLOCK)?;
    let central = full[0][0];
    let mut nav_shocked = BTreeMap::new();
    let mut marginals = MarginalScrSet { frozen: cfg.solvency.frozen.clone(), ..Default::default() };
    for (s, row) in cfg.shocks.iter().zip(&full[1..]) {
        nav_shocked.insert(s.id().as_str().to_string(), row[0]);
        marginals.insert_monitored(s.id().as_str(), central, row[0]);
    }
    let snap = assemble(central, marginals, &cfg.aggregation()?, &cfg.solvency.basis, &cfg.solvency.volume_measures)?;
    Ok((FullCalcReference { nav_central: central, nav_shocked, sr: snap.sr }, snap))
}

pub fn build_bundle(ctx: &Context, family: &ProxyFamily, full: Option<FullCalcReference>) -> Result<CalibrationBundle> {
    let cfg = &ctx.config;
    let b = CalibrationBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        version_id: String::new(),
        calibration_date: cfg.calibration_date,
        factors: ctx.alm.factors.clone(),
        base_observations: ctx
            .base_observations
            .iter()
            .filter(|(k, _)| ctx.alm.factors.position(k).is_some())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        central: family.central.clone(),
        shocked: family.shocked.clone(),
        space: ctx.space.clone(),
        basis: cfg.solvency.basis.clone(),
        frozen: cfg.solvency.frozen.clone(),
        aggregation: cfg.aggregation()?,
        volume_measures: cfg.solvency.volume_measures.clone(),
        attribution_order: cfg.attribution_order.clone(),
        full_calc: full,
        config_hash: cfg.hash(),
    }
    .seal()?;
    b.validate()?;
    Ok(b)
}

/// Proxies (LSMC and CF), out-of-sample validation and the bundle.
pub fn calibrate(ctx: &Context) -> Result<CalibrationOutput> {
    let t = Instant::now();
    let lsmc = calibrate_family(ctx, ProxyMethod::Lsmc, None)?;
    let cf = calibrate_family(ctx, ProxyMethod::Cf, Some(&lsmc))?;
    let validation = validation_table(ctx, &lsmc, &cf)?;
    let (full, _) = full_calc_reference(ctx)?;
    let family = match ctx.config.bundle_method {
        ProxyMethod::Lsmc => &lsmc,
        ProxyMethod::Cf => &cf,
    };
    let bundle = build_bundle(ctx, family, Some(full.clone()))?;
    let snapshot = whatif(&bundle, &bundle.zero())?.snapshot;
    let shocks = ctx.shocks();
    let mut proxies = summarise(&lsmc, &shocks);
    proxies.extend(summarise(&cf, &shocks));
    log::info!("calibration finished in {:.1}s", t.elapsed().as_secs_f64());
    let report = CalibrationReport {
        config_hash: ctx.config.hash(),
        bundle_version: bundle.version_id.clone(),
        seed: ctx.config.seed,
        space: ctx.space.clone(),
        proxies,
        validation,
        full_calc: full,
        calibration_snapshot: snapshot,
    };
    Ok(CalibrationOutput { bundle, lsmc, cf, report })
}

/// Re-runs the out-of-sample validation for an existing bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config_hash: String,
    pub bundle_version: String,
    pub scenarios: Vec<RiskFactorVector>,
    pub rows: Vec<ValidationRow>,
}

pub fn validate(ctx: &Context, bundle: &CalibrationBundle) -> Result<ValidationReport> {
    if bundle.factors != ctx.alm.factors {
        return Err(Error::Config("bundle and configuration monitor different factors".into()));
    }
    let cfg = &ctx.config;
    let scenarios = out_of_sample_path(&bundle.space, &cfg.worst()?, cfg.validation.steps)?;
    let (full, _) = full_calc(ctx, &scenarios, 0)?;
    let mut rows = Vec::new();
    for (shock, f) in ctx.shocks().iter().zip(&full) {
        let model = match shock {
            None => &bundle.central,
            Some(s) => bundle
                .shocked
                .get(s.id().as_str())
                .ok_or_else(|| Error::Config(format!("bundle has no proxy for shock {}", s.id())))?,
        };
        rows.push(validate_proxy(model, &label_of(shock), &scenarios, f)?);
    }
    Ok(ValidationReport { config_hash: cfg.hash(), bundle_version: bundle.version_id.clone(), scenarios, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub j: usize,
    pub factors: Vec<String>,
    /// Retained regressors besides the intercept.
    pub regressor_count: usize,
    pub regressors: Vec<String>,
    pub bp_lsmc: Option<BreuschPagan>,
    pub bp_cf: Option<BreuschPagan>,
    /// a = LSMC, b = CF.
    pub homoskedastic: IntervalComparison,
    pub white: IntervalComparison,
    pub eigenvalues_lsmc_homoskedastic: Vec<f64>,
    pub eigenvalues_cf_homoskedastic: Vec<f64>,
    pub eigenvalues_lsmc_white: Vec<f64>,
    pub eigenvalues_cf_white: Vec<f64>,
    pub loewner_homoskedastic: LoewnerOrder,
    pub loewner_white: LoewnerOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_hash: String,
    pub seed: u64,
    pub lsmc_n: usize,
    pub cf_n: usize,
    pub cf_p: usize,
    pub eval_n: usize,
    pub ci_level: f64,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "LSMC N = {}, CF N = {} x P = {}, evaluation set {} scenarios, {:.0}% intervals",
            self.lsmc_n,
            self.cf_n,
            self.cf_p,
            self.eval_n,
            100.0 * self.ci_level
        );
        let bp = |b: &Option<BreuschPagan>| b.as_ref().map_or("n/a".to_string(), |b| format!("{:.2} (p={:.3})", b.statistic, b.p_value));
        for r in &self.rows {
            let _ = writeln!(s, "\nJ = {} ({}), {} regressors", r.j, r.factors.join(", "), r.regressor_count);
            let _ = writeln!(s, "  Breusch-Pagan  LSMC {}  CF {}", bp(&r.bp_lsmc), bp(&r.bp_cf));
            for (name, c) in [("homoskedastic", &r.homoskedastic), ("heteroskedastic", &r.white)] {
                let _ = writeln!(
                    s,
                    "  {name:<16} LSMC shorter {:>6}  CF shorter {:>6}  equal {:>6}  total {:>6}",
                    c.a_smaller, c.b_smaller, c.ties, c.total
                );
            }
        }
        s
    }
}

fn bp_of(model: &ProxyModel, transitions: &[RiskFactorVector]) -> Option<BreuschPagan> {
    if model.monomials.is_empty() {
        return None;
    }
    breusch_pagan(&build_design(transitions, &model.monomials), &model.residuals).ok()
}

fn eig(m: &ProxyModel, kind: CovarianceKind) -> Vec<f64> {
    symmetric_eigenvalues(&m.covariance(kind))
}

/// LSMC versus CF at equal budget for J = 1..j_max factors.
pub fn compare(ctx: &Context) -> Result<CompareReport> {
    let cfg = &ctx.config;
    let c = cfg
        .compare
        .as_ref()
        .ok_or_else(|| Error::Config("the [compare] section is required for this command".into()))?;
    let mut rows = Vec::new();
    for j in 1..=c.j_max {
        let t = Instant::now();
        let factors = ctx.alm.factors.prefix(j)?;
        let space = ctx.space.prefix(j)?;
        let alm = AlmModel::new(ctx.alm.portfolio.clone(), ctx.alm.base.clone(), factors.clone(), ctx.alm.horizon)?;
        let opts = |k| CalibrationOptions {
            degree_cap: cfg.degree_cap,
            seed: stream(cfg.seed, k),
            calibration_date: Some(cfg.calibration_date),
            mode: ExecMode::Parallel,
        };
        let tl = sample_transitions(&space, c.lsmc_n, stream(cfg.seed, STREAM_LSMC_TRANSITIONS));
        let lsmc = calibrate_lsmc(&alm, &tl, None, &opts(STREAM_LSMC_PATHS))?;
        let tc = sample_transitions(&space, c.cf_n, stream(cfg.seed, STREAM_CF_TRANSITIONS));
        let cf = calibrate_cf(&alm, &tc, c.cf_p, lsmc.monomials.clone(), None, &opts(STREAM_CF_PATHS))?;
        let eval = sample_transitions(&space, c.eval_n, stream(cfg.seed, STREAM_EVAL));
        let homo = compare_interval_lengths(&lsmc, &cf, &eval, c.ci_level, CovarianceKind::Homoskedastic, false, ExecMode::Parallel)?;
        let white = compare_interval_lengths(&lsmc, &cf, &eval, c.ci_level, CovarianceKind::White, false, ExecMode::Parallel)?;
        log::info!("compare J = {j} done in {:.1}s", t.elapsed().as_secs_f64());
        rows.push(CompareRow {
            j,
            factors: factors.ids(),
            regressor_count: lsmc.monomials.len(),
            regressors: lsmc.labels(),
            bp_lsmc: bp_of(&lsmc, &tl),
            bp_cf: bp_of(&cf, &tc),
            homoskedastic: homo,
            white,
            eigenvalues_lsmc_homoskedastic: eig(&lsmc, CovarianceKind::Homoskedastic),
            eigenvalues_cf_homoskedastic: eig(&cf, CovarianceKind::Homoskedastic),
            eigenvalues_lsmc_white: eig(&lsmc, CovarianceKind::White),
            eigenvalues_cf_white: eig(&cf, CovarianceKind::White),
            loewner_homoskedastic: loewner_compare(&lsmc.covariance(CovarianceKind::Homoskedastic), &cf.covariance(CovarianceKind::Homoskedastic))?,
            loewner_white: loewner_compare(&lsmc.covariance(CovarianceKind::White), &cf.covariance(CovarianceKind::White))?,
        });
    }
    Ok(CompareReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        lsmc_n: c.lsmc_n,
        cf_n: c.cf_n,
        cf_p: c.cf_p,
        eval_n: c.eval_n,
        ci_level: c.ci_level,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub config_hash: String,
    pub bundle_version: String,
    pub records: usize,
    pub out_of_space_dates: Vec<chrono::NaiveDate>,
    pub skipped: Vec<(chrono::NaiveDate, String)>,
    pub latest: Option<MonitoringRecord>,
    pub diagram: Vec<DiagramFactor>,
}

pub struct MonitorOutput {
    pub records: Vec<MonitoringRecord>,
    pub summary: MonitorSummary,
}

pub fn monitor(config: &RunConfig, bundle: &CalibrationBundle, history: &IndexHistory) -> Result<MonitorOutput> {
    let (records, skipped) = evaluate_history(bundle, history, config.smoothing_window)?;
    let latest = records.last().cloned();
    let eps = latest.as_ref().map_or_else(|| bundle.zero(), |r| r.transition.clone());
    let summary = MonitorSummary {
        config_hash: config.hash(),
        bundle_version: bundle.version_id.clone(),
        records: records.len(),
        out_of_space_dates: records
            .iter()
            .filter(|r| r.validity == srmon_core::monitor::Validity::OutOfSpace)
            .map(|r| r.date)
            .collect(),
        skipped,
        latest,
        diagram: diagram(bundle, &eps)?,
    };
    Ok(MonitorOutput { records, summary })
}

/// Parses `id=value` pairs into a transition on the bundle's factors.
pub fn parse_assignments(bundle: &CalibrationBundle, pairs: &[String]) -> Result<RiskFactorVector> {
    let mut map = BTreeMap::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected factor=value, got {p:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad value in {p:?}")))?;
        map.insert(k.trim().to_string(), v);
    }
    bundle.transition_from_map(&map)
}

pub fn run_whatif(bundle: &CalibrationBundle, eps: &RiskFactorVector) -> Result<Evaluation> {
    whatif(bundle, eps)
}

/// Writes a JSON document with the audit fields on top.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Data(format!("serialisation: {e}")))?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// Header lines carried by every text report.
pub fn audit_header(config_hash: &str, bundle_version: &str) -> String {
    format!("# config_hash: {config_hash}\n# bundle_version: {bundle_version}\n")
}
