//! Least-squares kernels shared by the regression, panel and test modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size below which a column's orthogonal component counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct LeastSquares {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    /// `(X'X)^-1` (or its pseudo-inverse for the rank-tolerant solver).
    pub xtx_inv: DMatrix<f64>,
    pub rank: usize,
}

impl LeastSquares {
    pub fn covariance(&self, sigma2: f64) -> DMatrix<f64> {
        &self.xtx_inv * sigma2
    }
}

pub(crate) fn design(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

fn residuals_of(x: &DMatrix<f64>, y: &[f64], coef: &DVector<f64>) -> Vec<f64> {
    let fitted = x * coef;
    y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
}

/// Full-rank least squares by Householder QR.
///
/// A column whose component orthogonal to the preceding columns is below
/// `RANK_TOL` times its reference norm is reported as collinear. Reference
/// norms default to the column norms of `x`; callers that transform columns
/// (for example by demeaning) pass the untransformed norms so that an
/// absorbed column is still caught.
pub(crate) fn least_squares_qr(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    reference_norms: Option<&[f64]>,
) -> Result<LeastSquares> {
    let (n, k) = x.shape();
    if n < k {
        return Err(Error::invalid(format!("{n} rows for {k} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let norms: Vec<f64> = match reference_norms {
        Some(norms) => norms.to_vec(),
        None => (0..k).map(|j| x.column(j).norm()).collect(),
    };
    let collinear: Vec<String> = (0..k)
        .filter(|&j| {
            let scale = norms[j].max(x.column(j).norm());
            scale == 0.0 || r[(j, j)].abs() <= RANK_TOL * scale
        })
        .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("column {j}")))
        .collect();
    if !collinear.is_empty() {
        return Err(Error::Collinearity { columns: collinear });
    }

    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let coef = r.solve_upper_triangular(&qty).ok_or_else(|| Error::degenerate("triangular solve failed"))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::degenerate("triangular inverse failed"))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = residuals_of(x, y, &coef);
    let ssr = residuals.iter().map(|e| e * e).sum();
    Ok(LeastSquares { coef: coef.iter().copied().collect(), residuals, ssr, xtx_inv, rank: k })
}

/// Minimum-norm least squares through the SVD; tolerates rank deficiency.
pub(crate) fn least_squares_pinv(x: &DMatrix<f64>, y: &[f64]) -> Result<LeastSquares> {
    let (_, k) = x.shape();
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * RANK_TOL;
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let coef = svd.solve(&DVector::from_column_slice(y), eps).map_err(|e| Error::degenerate(e.to_string()))?;
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut xtx_inv = DMatrix::zeros(k, k);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > eps {
            let v = v_t.row(i).transpose();
            xtx_inv += &v * v.transpose() / (s * s);
        }
    }
    let residuals = residuals_of(x, y, &coef);
    let ssr = residuals.iter().map(|e| e * e).sum();
    Ok(LeastSquares { coef: coef.iter().copied().collect(), residuals, ssr, xtx_inv, rank })
}

/// Inverse of a symmetric matrix if positive definite, else the Moore-Penrose
/// pseudo-inverse. Returns `(inverse, rank, positive_definite)`.
pub(crate) fn symmetric_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, usize, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = scale * 1e-12 * m.nrows() as f64;
    let pd = scale > 0.0 && eig.eigenvalues.iter().all(|v| *v > tol);
    let k = m.nrows();
    let mut inv = DMatrix::zeros(k, k);
    let mut rank = 0;
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > tol {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            inv += v * v.transpose() / *lambda;
        }
    }
    (inv, rank, pd)
}
