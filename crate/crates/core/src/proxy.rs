//! Polynomial NAV proxies: candidate monomials, OLS, backward stepwise AIC
//! selection, LSMC and Curve Fitting calibration, evaluation and validation.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alm::{AlmModel, ShockSpec};
use crate::econometrics::{homoskedastic_cov_from_fit, white_cov_from_fit, CovarianceKind};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, qr_least_squares, subset_ssr, to_rows, QrFit};
use crate::par::ExecMode;
use crate::transitions::RiskFactorVector;

pub const PROXY_SCHEMA_VERSION: u32 = 1;

/// Product of factor powers, prod_j eps_j^{exponents_j}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial { exponents }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn eval(&self, eps: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(eps)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    /// Label such as `stock^2*rate`, using the given factor ids.
    pub fn label(&self, ids: &[String]) -> String {
        let parts: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, e)| **e > 0)
            .map(|(j, &e)| {
                let name = ids.get(j).cloned().unwrap_or_else(|| format!("e{}", j + 1));
                if e == 1 {
                    name
                } else {
                    format!("{name}^{e}")
                }
            })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

/// Monomials in at most two factors with total degree in 1..=cap.
///
/// Order: single-factor powers by factor then degree, then pairs (i < j) by
/// total degree, and within a degree by decreasing power of factor i.
pub fn candidate_regressors(j: usize, degree_cap: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for i in 0..j {
        for d in 1..=degree_cap {
            let mut e = vec![0; j];
            e[i] = d;
            out.push(Monomial::new(e));
        }
    }
    for i in 0..j {
        for k in i + 1..j {
            for total in 2..=degree_cap {
                for a in (1..total).rev() {
                    let mut e = vec![0; j];
                    e[i] = a;
                    e[k] = total - a;
                    out.push(Monomial::new(e));
                }
            }
        }
    }
    out
}

/// Rows (1, x_1(eps), ..., x_K(eps)).
pub fn build_design(transitions: &[RiskFactorVector], monomials: &[Monomial]) -> DMatrix<f64> {
    let k = monomials.len() + 1;
    DMatrix::from_fn(transitions.len(), k, |n, c| {
        if c == 0 {
            1.0
        } else {
            monomials[c - 1].eval(transitions[n].values())
        }
    })
}

fn design_names(monomials: &[Monomial], ids: &[String]) -> Vec<String> {
    std::iter::once("intercept".to_string()).chain(monomials.iter().map(|m| m.label(ids))).collect()
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    pub qr: QrFit,
}

/// OLS by Householder QR; sigma2 = SSR / (N - K - 1).
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<OlsFit> {
    let (n, cols) = x.shape();
    if n <= cols {
        return Err(Error::Calibration(format!("OLS needs N > K + 1 (N = {n}, K + 1 = {cols})")));
    }
    let qr = qr_least_squares(x, y, names)?;
    let sigma2 = qr.ssr / (n - cols) as f64;
    Ok(OlsFit { beta: qr.coefficients.clone(), residuals: qr.residuals.clone(), sigma2, qr })
}

/// Gaussian AIC with K regressors besides the intercept: N ln(SSR/N) + 2(K + 2).
pub fn aic(n: usize, ssr: f64, k: usize) -> f64 {
    n as f64 * (ssr.max(f64::MIN_POSITIVE) / n as f64).ln() + 2.0 * (k as f64 + 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseResult {
    /// Retained design columns (0 is the intercept), in column order.
    pub kept: Vec<usize>,
    /// Removed columns, in removal order.
    pub removed: Vec<usize>,
    /// AIC of the full model followed by the AIC after each removal.
    pub aic_path: Vec<f64>,
}

/// Backward elimination: repeatedly drop the column whose removal lowers AIC
/// the most, until no removal lowers it. The intercept is never dropped; ties
/// go to the earliest column.
pub fn stepwise_select(x_full: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<StepwiseResult> {
    let n = x_full.nrows();
    let full = qr_least_squares(x_full, y, names)?;
    let mut kept: Vec<usize> = (0..x_full.ncols()).collect();
    let mut current = aic(n, full.ssr, kept.len() - 1);
    let mut removed = Vec::new();
    let mut aic_path = vec![current];
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &col) in kept.iter().enumerate() {
            if col == 0 {
                continue;
            }
            let subset: Vec<usize> = kept.iter().copied().filter(|&c| c != col).collect();
            let value = aic(n, subset_ssr(&full, &subset)?, subset.len() - 1);
            if best.is_none_or(|(_, b)| value < b) {
                best = Some((pos, value));
            }
        }
        match best {
            Some((pos, value)) if value < current => {
                removed.push(kept.remove(pos));
                current = value;
                aic_path.push(value);
            }
            _ => break,
        }
    }
    Ok(StepwiseResult { kept, removed, aic_path })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMethod {
    Lsmc,
    Cf,
}

/// Fitted polynomial proxy, persisted as a versioned document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyModel {
    pub schema_version: u32,
    pub method: ProxyMethod,
    pub factor_ids: Vec<String>,
    pub monomials: Vec<Monomial>,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    pub r_squared: f64,
    pub cov_homo: Vec<Vec<f64>>,
    pub cov_white: Vec<Vec<f64>>,
    pub n_primary: usize,
    pub p_secondary: usize,
    pub shock: Option<ShockSpec>,
    pub calibration_date: Option<NaiveDate>,
    pub seed: u64,
}

/// Metadata attached to a fitted proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMeta {
    pub method: ProxyMethod,
    pub factor_ids: Vec<String>,
    pub p_secondary: usize,
    pub shock: Option<ShockSpec>,
    pub calibration_date: Option<NaiveDate>,
    pub seed: u64,
}

impl ProxyModel {
    /// Fits `y` on the given monomials and stores both covariance estimators.
    pub fn fit(transitions: &[RiskFactorVector], y: &[f64], monomials: Vec<Monomial>, meta: ProxyMeta) -> Result<ProxyModel> {
        let j = meta.factor_ids.len();
        if let Some(e) = transitions.iter().find(|e| e.len() != j) {
            return Err(Error::Domain(format!("transition of length {} for {j} factors", e.len())));
        }
        let x = build_design(transitions, &monomials);
        let names = design_names(&monomials, &meta.factor_ids);
        let fit = ols_fit(&x, y, &names)?;
        let homo = homoskedastic_cov_from_fit(&fit.qr, fit.sigma2)?;
        let white = white_cov_from_fit(&x, &fit.qr, &fit.residuals)?;
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
        let r_squared = if tss > 0.0 { 1.0 - fit.qr.ssr / tss } else { 1.0 };
        Ok(ProxyModel {
            schema_version: PROXY_SCHEMA_VERSION,
            method: meta.method,
            factor_ids: meta.factor_ids,
            monomials,
            beta: fit.beta,
            residuals: fit.residuals,
            sigma2: fit.sigma2,
            r_squared,
            cov_homo: to_rows(&homo.matrix),
            cov_white: to_rows(&white.matrix),
            n_primary: transitions.len(),
            p_secondary: meta.p_secondary,
            shock: meta.shock,
            calibration_date: meta.calibration_date,
            seed: meta.seed,
        })
    }

    pub fn k(&self) -> usize {
        self.monomials.len()
    }

    pub fn design_row(&self, eps: &RiskFactorVector) -> Result<Vec<f64>> {
        eps.check_len(self.factor_ids.len())?;
        Ok(std::iter::once(1.0).chain(self.monomials.iter().map(|m| m.eval(eps.values()))).collect())
    }

    pub fn covariance(&self, kind: CovarianceKind) -> DMatrix<f64> {
        let rows = match kind {
            CovarianceKind::Homoskedastic => &self.cov_homo,
            CovarianceKind::White => &self.cov_white,
        };
        from_rows(rows).expect("stored covariance is square")
    }

    pub fn labels(&self) -> Vec<String> {
        design_names(&self.monomials, &self.factor_ids)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("proxy serialisation: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ProxyModel = serde_json::from_str(s).map_err(|e| Error::Data(format!("proxy document: {e}")))?;
        if m.schema_version != PROXY_SCHEMA_VERSION {
            return Err(Error::Data(format!("proxy schema_version {} is not supported", m.schema_version)));
        }
        if m.beta.len() != m.monomials.len() + 1 {
            return Err(Error::Data("proxy has inconsistent coefficient count".into()));
        }
        Ok(m)
    }
}

/// x(eps) . beta
pub fn evaluate(model: &ProxyModel, eps: &RiskFactorVector) -> Result<f64> {
    Ok(model.design_row(eps)?.iter().zip(&model.beta).map(|(x, b)| x * b).sum())
}

pub fn evaluate_batch(model: &ProxyModel, eps: &[RiskFactorVector]) -> Result<Vec<f64>> {
    eps.iter().map(|e| evaluate(model, e)).collect()
}

/// Options shared by the calibration pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub degree_cap: u32,
    pub seed: u64,
    pub calibration_date: Option<NaiveDate>,
    pub mode: ExecMode,
}

/// LSMC: one NPV per transition, backward stepwise selection over the
/// candidate monomials, then OLS on the retained set.
pub fn calibrate_lsmc(
    alm: &AlmModel,
    transitions: &[RiskFactorVector],
    shock: Option<&ShockSpec>,
    opts: &CalibrationOptions,
) -> Result<ProxyModel> {
    let y = alm.nav_responses(transitions, shock, 1, opts.seed, opts.mode)?;
    let meta = ProxyMeta {
        method: ProxyMethod::Lsmc,
        factor_ids: alm.factors.ids(),
        p_secondary: 1,
        shock: shock.cloned(),
        calibration_date: opts.calibration_date,
        seed: opts.seed,
    };
    select_and_fit(transitions, &y, opts.degree_cap, meta)
}

/// Stepwise selection over the candidates followed by the final fit.
pub fn select_and_fit(transitions: &[RiskFactorVector], y: &[f64], degree_cap: u32, meta: ProxyMeta) -> Result<ProxyModel> {
    let candidates = candidate_regressors(meta.factor_ids.len(), degree_cap);
    if transitions.len() < candidates.len() + 10 {
        return Err(Error::Config(format!(
            "LSMC needs at least {} transitions for {} candidate regressors",
            candidates.len() + 10,
            candidates.len()
        )));
    }
    let x = build_design(transitions, &candidates);
    let names = design_names(&candidates, &meta.factor_ids);
    let sel = stepwise_select(&x, y, &names)?;
    let monomials: Vec<Monomial> = sel.kept.iter().filter(|&&c| c > 0).map(|&c| candidates[c - 1].clone()).collect();
    ProxyModel::fit(transitions, y, monomials, meta)
}

/// Curve Fitting: responses are means over P secondary paths; the regressor
/// set is supplied (typically the LSMC selection), not re-selected.
pub fn calibrate_cf(
    alm: &AlmModel,
    transitions: &[RiskFactorVector],
    p: usize,
    monomials: Vec<Monomial>,
    shock: Option<&ShockSpec>,
    opts: &CalibrationOptions,
) -> Result<ProxyModel> {
    let y = alm.nav_responses(transitions, shock, p, opts.seed, opts.mode)?;
    let meta = ProxyMeta {
        method: ProxyMethod::Cf,
        factor_ids: alm.factors.ids(),
        p_secondary: p,
        shock: shock.cloned(),
        calibration_date: opts.calibration_date,
        seed: opts.seed,
    };
    ProxyModel::fit(transitions, &y, monomials, meta)
}

/// Relative deviations of one proxy against full-calculation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub label: String,
    pub proxy: Vec<f64>,
    pub full: Vec<f64>,
    /// (proxy - full) / full; `None` where the full value is zero.
    pub deviations: Vec<Option<f64>>,
}

impl ValidationRow {
    pub fn max_abs_deviation(&self) -> Option<f64> {
        self.deviations.iter().flatten().map(|d| d.abs()).fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
    }

    pub fn undefined(&self) -> usize {
        self.deviations.iter().filter(|d| d.is_none()).count()
    }
}

pub fn validate(model: &ProxyModel, label: &str, scenarios: &[RiskFactorVector], full_calc: &[f64]) -> Result<ValidationRow> {
    if scenarios.len() != full_calc.len() {
        return Err(Error::Data(format!("{} scenarios but {} full-calculation values", scenarios.len(), full_calc.len())));
    }
    let proxy = evaluate_batch(model, scenarios)?;
    let deviations = proxy
        .iter()
        .zip(full_calc)
        .map(|(p, f)| if *f == 0.0 { None } else { Some((p - f) / f) })
        .collect();
    Ok(ValidationRow { label: label.to_string(), proxy, full: full_calc.to_vec(), deviations })
}
