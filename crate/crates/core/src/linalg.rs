//! Dense linear algebra used by the regression code: Householder least squares
//! with rank detection, triangular inverses and symmetric eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A column is declared collinear when its QR pivot falls below this fraction of
/// its own Euclidean norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Thin QR least-squares fit of `y` on the columns of `x`.
#[derive(Debug, Clone)]
pub struct QrFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    /// Upper-triangular factor, k x k.
    pub r: DMatrix<f64>,
    /// First k entries of Q'y.
    pub qty: DVector<f64>,
}

impl QrFit {
    /// R^{-1}, upper triangular.
    pub fn r_inverse(&self) -> Result<DMatrix<f64>> {
        upper_triangular_inverse(&self.r)
    }

    /// (X'X)^{-1} = R^{-1} R^{-T}.
    pub fn xtx_inverse(&self) -> Result<DMatrix<f64>> {
        let ri = self.r_inverse()?;
        Ok(&ri * ri.transpose())
    }
}

/// Solves min ||y - X b||_2 by Householder QR.
///
/// `names` labels the columns in rank-deficiency diagnostics.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<QrFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Data(format!("design has {n} rows but response has {}", y.len())));
    }
    if n < k {
        return Err(Error::Calibration(format!("{n} observations cannot identify {k} coefficients")));
    }
    let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let qr = x.clone().qr();
    let r_full = qr.r();
    let r = r_full.view((0, 0), (k, k)).into_owned();

    let collinear: Vec<String> = (0..k)
        .filter(|&j| norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norms[j])
        .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    let mut qty_full = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty_full);
    let qty = qty_full.rows(0, k).into_owned();
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;

    let fitted = x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let ssr = residuals.iter().map(|u| u * u).sum();
    Ok(QrFit {
        coefficients: beta.iter().copied().collect(),
        residuals,
        ssr,
        r,
        qty,
    })
}

/// Residual sum of squares of the sub-model using only `columns`, computed from a
/// full-model QR: SSR_S = SSR_full + min_b ||Q'y - R_S b||^2.
pub fn subset_ssr(full: &QrFit, columns: &[usize]) -> Result<f64> {
    let k = full.r.nrows();
    if columns.is_empty() {
        return Ok(full.ssr + full.qty.norm_squared());
    }
    let mut rs = DMatrix::zeros(k, columns.len());
    for (c, &j) in columns.iter().enumerate() {
        rs.set_column(c, &full.r.column(j));
    }
    let qr = rs.qr();
    let mut rhs = full.qty.clone();
    qr.q_tr_mul(&mut rhs);
    let extra: f64 = rhs.rows(columns.len(), k - columns.len()).norm_squared();
    Ok(full.ssr + extra)
}

pub fn upper_triangular_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = r.nrows();
    r.solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

/// Eigenvalues of a symmetric matrix, sorted in decreasing order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Largest absolute asymmetry |m_ij - m_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Data("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = qr_least_squares(&x, &y, &names(2)).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.ssr < 1e-20);
    }

    #[test]
    fn collinear_column_is_named() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 1.0, 2.0, //
            1.0, 2.0, 4.0, //
            1.0, 3.0, 6.0, //
            1.0, 4.0, 8.0,
        ]);
        let err = qr_least_squares(&x, &[1.0, 2.0, 3.0, 4.0], &names(3)).unwrap_err();
        match err {
            Error::RankDeficient { columns } => assert_eq!(columns, vec!["c2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subset_ssr_matches_direct_refit() {
        let x = DMatrix::from_fn(30, 4, |i, j| ((i * 7 + j * 13) % 11) as f64 + (j as f64) * 0.1 * i as f64);
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin() * 3.0 + i as f64 * 0.2).collect();
        let full = qr_least_squares(&x, &y, &names(4)).unwrap();
        let cols = [0usize, 2];
        let sub = DMatrix::from_fn(30, 2, |i, j| x[(i, cols[j])]);
        let direct = qr_least_squares(&sub, &y, &names(2)).unwrap();
        let via = subset_ssr(&full, &cols).unwrap();
        assert!((via - direct.ssr).abs() < 1e-9 * direct.ssr.max(1.0));
    }
}
