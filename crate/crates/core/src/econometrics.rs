//! Covariance estimators, Breusch-Pagan test, asymptotic confidence intervals
//! and matrix comparisons for OLS proxies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, qr_least_squares, symmetric_eigenvalues, QrFit};
use crate::par::{map_slice, ExecMode};
use crate::proxy::ProxyModel;
use crate::stats::{chi_square_sf, normal_quantile};
use crate::transitions::RiskFactorVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Homoskedastic,
    White,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub kind: CovarianceKind,
    pub matrix: DMatrix<f64>,
}

impl CovarianceEstimate {
    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.matrix)
    }
}

fn column_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

/// sigma2 (X'X)^{-1} from an existing QR fit.
pub fn homoskedastic_cov_from_fit(fit: &QrFit, sigma2: f64) -> Result<CovarianceEstimate> {
    let mut m = fit.xtx_inverse()?;
    m *= sigma2;
    symmetrize(&mut m);
    Ok(CovarianceEstimate { kind: CovarianceKind::Homoskedastic, matrix: m })
}

/// sigma2 (X'X)^{-1}, computed through the QR factor of X.
pub fn homoskedastic_cov(x: &DMatrix<f64>, sigma2: f64) -> Result<CovarianceEstimate> {
    let fit = qr_least_squares(x, &vec![0.0; x.nrows()], &column_names(x.ncols()))?;
    homoskedastic_cov_from_fit(&fit, sigma2)
}

/// White (HC0) sandwich from an existing QR fit of X:
/// R^{-1} (sum_n u_n^2 q_n' q_n) R^{-T} with q_n = x_n R^{-1}.
pub fn white_cov_from_fit(x: &DMatrix<f64>, fit: &QrFit, residuals: &[f64]) -> Result<CovarianceEstimate> {
    if residuals.len() != x.nrows() {
        return Err(Error::Data("residual count does not match design rows".into()));
    }
    let ri = fit.r_inverse()?;
    let q = x * &ri;
    let k = x.ncols();
    let mut meat = DMatrix::zeros(k, k);
    for (n, u) in residuals.iter().enumerate() {
        let row = q.row(n);
        let w = u * u;
        for i in 0..k {
            let a = w * row[i];
            for j in 0..=i {
                meat[(i, j)] += a * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            meat[(j, i)] = meat[(i, j)];
        }
    }
    let mut m = &ri * meat * ri.transpose();
    symmetrize(&mut m);
    Ok(CovarianceEstimate { kind: CovarianceKind::White, matrix: m })
}

/// White (HC0) sandwich (X'X)^{-1} (sum u_n^2 x_n' x_n) (X'X)^{-1}.
pub fn white_cov(x: &DMatrix<f64>, residuals: &[f64]) -> Result<CovarianceEstimate> {
    let fit = qr_least_squares(x, &vec![0.0; x.nrows()], &column_names(x.ncols()))?;
    white_cov_from_fit(x, &fit, residuals)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreuschPagan {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Koenker's studentised Breusch-Pagan test: N R^2 of the regression of the
/// squared residuals on the design, chi-square with K degrees of freedom.
/// `x` must contain the intercept as its first column.
pub fn breusch_pagan(x: &DMatrix<f64>, residuals: &[f64]) -> Result<BreuschPagan> {
    let (n, cols) = x.shape();
    if cols < 2 {
        return Err(Error::Calibration("Breusch-Pagan needs at least one regressor besides the intercept".into()));
    }
    let k = cols - 1;
    if n <= k + 2 {
        return Err(Error::Calibration(format!("Breusch-Pagan needs N > K + 2 (N = {n}, K = {k})")));
    }
    if residuals.len() != n {
        return Err(Error::Data("residual count does not match design rows".into()));
    }
    let u2: Vec<f64> = residuals.iter().map(|u| u * u).collect();
    let m = u2.iter().sum::<f64>() / n as f64;
    let tss: f64 = u2.iter().map(|v| (v - m) * (v - m)).sum();
    // constant squared residuals: nothing left to explain
    if tss <= f64::MIN_POSITIVE || tss <= 1e-24 * m * m * n as f64 {
        return Ok(BreuschPagan { statistic: 0.0, df: k, p_value: 1.0 });
    }
    let aux = qr_least_squares(x, &u2, &column_names(cols))?;
    let r2 = (1.0 - aux.ssr / tss).clamp(0.0, 1.0);
    let statistic = n as f64 * r2;
    Ok(BreuschPagan { statistic, df: k, p_value: chi_square_sf(statistic, k as f64)? })
}

/// Asymptotic two-sided interval x b +- q_{(1+alpha)/2} sqrt(x V x').
pub fn confidence_interval(model: &ProxyModel, eps: &RiskFactorVector, alpha: f64, kind: CovarianceKind) -> Result<(f64, f64)> {
    let (center, half) = interval_half_width(model, eps, alpha, kind)?;
    Ok((center - half, center + half))
}

/// Center and half-width of the asymptotic interval.
pub fn interval_half_width(model: &ProxyModel, eps: &RiskFactorVector, alpha: f64, kind: CovarianceKind) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0,1), got {alpha}")));
    }
    let q = normal_quantile((1.0 + alpha) / 2.0)?;
    let row = model.design_row(eps)?;
    let v = model.covariance(kind);
    let qf = quadratic_form(&v, &row);
    let scale = row.iter().map(|x| x * x).sum::<f64>() * v.diagonal().amax();
    if qf < -1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!("negative variance {qf} in confidence interval")));
    }
    let center = row.iter().zip(&model.beta).map(|(x, b)| x * b).sum();
    Ok((center, q * qf.max(0.0).sqrt()))
}

fn quadratic_form(v: &DMatrix<f64>, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    (xv.transpose() * v * &xv)[(0, 0)]
}

/// Tally of which model yields the strictly shorter interval per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalComparison {
    pub a_smaller: usize,
    pub b_smaller: usize,
    pub ties: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<(f64, f64)>>,
}

/// Relative tolerance below which two interval lengths count as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

pub fn compare_interval_lengths(
    a: &ProxyModel,
    b: &ProxyModel,
    scenarios: &[RiskFactorVector],
    alpha: f64,
    kind: CovarianceKind,
    keep_lengths: bool,
    mode: ExecMode,
) -> Result<IntervalComparison> {
    if a.monomials != b.monomials {
        return Err(Error::Config("interval comparison needs models on the same regressors".into()));
    }
    let lengths = map_slice(scenarios, mode, |e| -> Result<(f64, f64)> {
        let (_, ha) = interval_half_width(a, e, alpha, kind)?;
        let (_, hb) = interval_half_width(b, e, alpha, kind)?;
        Ok((2.0 * ha, 2.0 * hb))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (mut sa, mut sb, mut ties) = (0, 0, 0);
    for &(la, lb) in &lengths {
        if (la - lb).abs() <= TIE_TOLERANCE * la.abs().max(lb.abs()) {
            ties += 1;
        } else if la < lb {
            sa += 1;
        } else {
            sb += 1;
        }
    }
    Ok(IntervalComparison { a_smaller: sa, b_smaller: sb, ties, total: lengths.len(), lengths: keep_lengths.then_some(lengths) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoewnerOrder {
    /// b - a is positive semidefinite (a is the smaller covariance).
    ADominates,
    BDominates,
    /// Both differences are PSD: the matrices agree within tolerance.
    Equal,
    Incomparable,
}

/// Loewner comparison through the eigenvalues of b - a.
pub fn loewner_compare(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LoewnerOrder> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Domain("Loewner comparison needs square matrices of equal size".into()));
    }
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    if asymmetry(a) > 1e-12 * scale || asymmetry(b) > 1e-12 * scale {
        return Err(Error::Domain("Loewner comparison needs symmetric matrices".into()));
    }
    let ev = symmetric_eigenvalues(&(b - a));
    let tol = 1e-12 * scale * a.nrows() as f64;
    let b_minus_a_psd = ev.iter().all(|&e| e >= -tol);
    let a_minus_b_psd = ev.iter().all(|&e| e <= tol);
    Ok(match (b_minus_a_psd, a_minus_b_psd) {
        (true, true) => LoewnerOrder::Equal,
        (true, false) => LoewnerOrder::ADominates,
        (false, true) => LoewnerOrder::BDominates,
        (false, false) => LoewnerOrder::Incomparable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn design(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] })
    }

    #[test]
    fn intercept_only_covariances() {
        let y = [1.0, 2.0, 4.0, 7.0, 11.0];
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let u: Vec<f64> = y.iter().map(|v| v - m).collect();
        let s2 = u.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
        let x = DMatrix::from_element(5, 1, 1.0);
        let h = homoskedastic_cov(&x, s2).unwrap();
        assert!((h.matrix[(0, 0)] - s2 / n).abs() < 1e-14);
        let w = white_cov(&x, &u).unwrap();
        let oracle = u.iter().map(|v| v * v).sum::<f64>() / (n * n);
        assert!((w.matrix[(0, 0)] - oracle).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_design_gives_scaled_identity() {
        let x = from_rows(&[
            vec![0.5, 0.5],
            vec![0.5, -0.5],
            vec![0.5, 0.5],
            vec![0.5, -0.5],
        ])
        .unwrap();
        let h = homoskedastic_cov(&x, 2.0).unwrap();
        assert!((h.matrix[(0, 0)] - 2.0).abs() < 1e-14 && (h.matrix[(1, 1)] - 2.0).abs() < 1e-14);
        assert!(h.matrix[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn white_equals_homoskedastic_for_equal_squared_residuals() {
        let xs = [0.1, -0.3, 0.7, 1.2, -0.9, 0.4];
        let x = design(&xs);
        let u = [0.5, -0.5, 0.5, -0.5, 0.5, -0.5];
        let w = white_cov(&x, &u).unwrap();
        // HC0 with constant u^2 equals u^2 (X'X)^{-1}
        let h = homoskedastic_cov(&x, 0.25).unwrap();
        assert!((w.matrix - h.matrix).amax() < 1e-14);
    }

    #[test]
    fn white_matches_brute_force_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = xs.iter().map(|x| x * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let x = design(&xs);
        let w = white_cov(&x, &u).unwrap();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for n in 0..xs.len() {
            let r = x.row(n);
            meat += u[n] * u[n] * r.transpose() * r;
        }
        let oracle = &xtx_inv * meat * &xtx_inv;
        assert!((w.matrix - &oracle).amax() < 1e-12 * oracle.amax());
    }

    #[test]
    fn bp_constant_residuals() {
        let x = design(&[0.1, 0.2, 0.5, 0.9, -0.4, 0.3]);
        let bp = breusch_pagan(&x, &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(bp.statistic, 0.0);
        assert_eq!(bp.p_value, 1.0);
        assert!(breusch_pagan(&design(&[0.1, 0.2, 0.3]), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn bp_scale_invariant_and_detects_heteroskedasticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<f64> = (0..2000).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = DMatrix::from_fn(xs.len(), 3, |i, j| xs[i].powi(j as i32));
        let u: Vec<f64> = xs.iter().map(|v| (1.0 + v * v).sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let a = breusch_pagan(&x, &u).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| 7.5 * v).collect();
        let b = breusch_pagan(&x, &scaled).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-9 * a.statistic);
        assert!(a.p_value < 1e-6);
    }

    #[test]
    fn loewner_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(loewner_compare(&i, &i).unwrap(), LoewnerOrder::Equal);
        assert_eq!(loewner_compare(&i, &(2.0 * &i)).unwrap(), LoewnerOrder::ADominates);
        assert_eq!(loewner_compare(&(2.0 * &i), &i).unwrap(), LoewnerOrder::BDominates);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        assert_eq!(loewner_compare(&a, &b).unwrap(), LoewnerOrder::Incomparable);
        let asym = from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(loewner_compare(&asym, &i.view((0, 0), (2, 2)).into_owned()).is_err());
    }

    #[test]
    fn loewner_random_crossing_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose();
        let mut b = a.clone();
        b[(0, 0)] += 0.5;
        b[(3, 3)] -= 0.05;
        let ev = symmetric_eigenvalues(&(&b - &a));
        assert!(ev[0] > 0.0 && ev[3] < 0.0);
        assert_eq!(loewner_compare(&a, &b).unwrap(), LoewnerOrder::Incomparable);
    }
}
