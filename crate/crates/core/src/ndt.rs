//! Per-cell Gaussian statistics: sample mean and covariance, differential
//! entropy, and the probability density score (sum of unnormalized
//! Gaussian responses of the cell's own points).

use std::f64::consts::{E, PI};

use nalgebra::{Cholesky, Matrix1, Matrix3, SMatrix, SVector, Vector1, Vector3};

use crate::cloud::Point;
use crate::error::{Error, Result};

/// Fitted statistics for one cell with at least `min_points` points.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub count: usize,
    pub mean: Vector3<f64>,
    /// Sample covariance with `N - 1` divisor, plus `eps * I`.
    pub cov: Matrix3<f64>,
    pub entropy_p: f64,
    pub pds_p: f64,
    pub intensity_mean: f64,
    /// Sample variance with `N - 1` divisor, plus `eps`.
    pub intensity_var: f64,
    pub entropy_it: f64,
    pub pds_it: f64,
}

/// Differential entropy `0.5 * (D ln(2πe) + ln|Σ|)` in nats, with the
/// log-determinant taken from a Cholesky factor.
pub fn entropy_gauss<const D: usize>(cov: &SMatrix<f64, D, D>) -> Result<f64> {
    let chol = Cholesky::new(*cov).ok_or(Error::NotPositiveDefinite)?;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (D as f64 * (2.0 * PI * E).ln() + log_det))
}

/// Unnormalized Gaussian response `exp(-0.5 m²)` of each point, where `m`
/// is the Mahalanobis distance evaluated by a triangular solve.
pub fn gaussian_responses<const D: usize>(
    points: &[SVector<f64, D>],
    mean: &SVector<f64, D>,
    cov: &SMatrix<f64, D, D>,
) -> Result<Vec<f64>> {
    let chol = Cholesky::new(*cov).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    Ok(points
        .iter()
        .map(|p| {
            let z = l
                .solve_lower_triangular(&(p - mean))
                .expect("cholesky factor has a positive diagonal");
            (-0.5 * z.norm_squared()).exp()
        })
        .collect())
}

/// Probability density score: the sum of [`gaussian_responses`].
pub fn pds<const D: usize>(
    points: &[SVector<f64, D>],
    mean: &SVector<f64, D>,
    cov: &SMatrix<f64, D, D>,
) -> Result<f64> {
    Ok(gaussian_responses(points, mean, cov)?.iter().sum())
}

/// Fits a cell. Points are put into canonical order first so the result
/// does not depend on the order they were supplied in. Returns `None` when
/// the cell has fewer than `min_points` points.
pub fn fit_cell(points: &[Point], eps: f64, min_points: usize) -> Option<CellStats> {
    let n = points.len();
    if n < min_points.max(2) {
        return None;
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(Point::canonical_cmp);
    Some(fit_sorted(&sorted, eps))
}

/// [`fit_cell`] for points already in canonical order and `N >= 2`.
pub(crate) fn fit_sorted(points: &[Point], eps: f64) -> CellStats {
    let n = points.len();
    let nf = n as f64;
    let xyz: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::new(p.x, p.y, p.z)).collect();
    let its: Vec<Vector1<f64>> = points.iter().map(|p| Vector1::new(p.intensity)).collect();

    let mean = xyz.iter().fold(Vector3::zeros(), |acc, p| acc + p) / nf;
    let mut cov = Matrix3::zeros();
    for p in &xyz {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= nf - 1.0;
    cov += Matrix3::identity() * eps;

    let it_mean = its.iter().map(|v| v[0]).sum::<f64>() / nf;
    let it_var = its.iter().map(|v| (v[0] - it_mean).powi(2)).sum::<f64>() / (nf - 1.0) + eps;
    let it_cov = Matrix1::new(it_var);
    let it_mu = Vector1::new(it_mean);

    // Regularization keeps both covariances positive definite.
    CellStats {
        count: n,
        mean,
        cov,
        entropy_p: entropy_gauss(&cov).expect("regularized covariance"),
        pds_p: pds(&xyz, &mean, &cov).expect("regularized covariance"),
        intensity_mean: it_mean,
        intensity_var: it_var,
        entropy_it: entropy_gauss(&it_cov).expect("regularized variance"),
        pds_it: pds(&its, &it_mu, &it_cov).expect("regularized variance"),
    }
}
