//! Distance and shape math: multipath component distance (MCD), the
//! power-weighted distance matrix used for seeding, power-weighted centroids
//! and spread matrices, and the Gaussian closeness function used for
//! association.

use nalgebra::{DMatrix, Matrix3};
use thiserror::Error;

use crate::model::Vec3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: {points} points but {powers} powers")]
    DimensionMismatch { points: usize, powers: usize },
}

/// Per-axis coordinate ranges used to normalize MCD terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRanges {
    pub dx_max: f64,
    pub dy_max: f64,
    pub dz_max: f64,
}

impl AxisRanges {
    pub fn new(dx_max: f64, dy_max: f64, dz_max: f64) -> Self {
        Self {
            dx_max,
            dy_max,
            dz_max,
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.dx_max, self.dy_max, self.dz_max]
    }
}

/// Max pairwise absolute difference per axis, computed as max minus min.
pub fn axis_ranges(points: &[Vec3]) -> Result<AxisRanges, GeometryError> {
    let first = points.first().ok_or(GeometryError::EmptyInput)?;
    let (lo, hi) = points
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let d = hi - lo;
    Ok(AxisRanges::new(d.x, d.y, d.z))
}

/// Range-normalized Euclidean distance. Axes with zero range contribute 0.
pub fn mcd(a: &Vec3, b: &Vec3, ranges: &AxisRanges) -> f64 {
    let r = ranges.as_array();
    let mut acc = 0.0;
    for axis in 0..3 {
        if r[axis] > 0.0 {
            let t = (a[axis] - b[axis]).abs() / r[axis];
            acc += t * t;
        }
    }
    acc.sqrt()
}

/// Seeding weight of each path: `log10(p / p_min)`, zero for the weakest path.
pub fn log_power_weights(powers: &[f64]) -> Vec<f64> {
    let p_min = powers.iter().copied().fold(f64::INFINITY, f64::min);
    powers.iter().map(|p| (p / p_min).log10()).collect()
}

/// L x C matrix of `log10(p_l / p_min) * mcd(point_l, centroid_c)`.
pub fn weighted_distance_matrix(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    ranges: &AxisRanges,
) -> Result<DMatrix<f64>, GeometryError> {
    if points.len() != powers.len() {
        return Err(GeometryError::DimensionMismatch {
            points: points.len(),
            powers: powers.len(),
        });
    }
    let weights = log_power_weights(powers);
    Ok(DMatrix::from_fn(points.len(), centroids.len(), |l, c| {
        weights[l] * mcd(&points[l], &centroids[c], ranges)
    }))
}

/// Power-weighted mean position.
pub fn weighted_centroid(points: &[Vec3], powers: &[f64]) -> Result<Vec3, GeometryError> {
    check_weighted(points, powers)?;
    let total: f64 = powers.iter().sum();
    let sum = points
        .iter()
        .zip(powers)
        .fold(Vec3::zeros(), |acc, (x, p)| acc + x * *p);
    Ok(sum / total)
}

/// Power-weighted covariance of the points around `centroid`.
pub fn spread_matrix(
    points: &[Vec3],
    powers: &[f64],
    centroid: &Vec3,
) -> Result<Matrix3<f64>, GeometryError> {
    check_weighted(points, powers)?;
    let total: f64 = powers.iter().sum();
    let mut c = Matrix3::zeros();
    for (x, p) in points.iter().zip(powers) {
        let d = x - centroid;
        c += d * d.transpose() * *p;
    }
    c /= total;
    // exact symmetry for downstream Cholesky
    Ok((c + c.transpose()) * 0.5)
}

fn check_weighted(points: &[Vec3], powers: &[f64]) -> Result<(), GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    if points.len() != powers.len() {
        return Err(GeometryError::DimensionMismatch {
            points: points.len(),
            powers: powers.len(),
        });
    }
    Ok(())
}

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Natural log of the closeness function. Association compares these values,
/// since the density itself underflows for well-separated compact clusters.
///
/// Returns `-inf` if `spread + eps*I` is not positive definite.
pub fn log_closeness(candidate: &Vec3, centroid: &Vec3, spread: &Matrix3<f64>, eps: f64) -> f64 {
    let cov = spread + Matrix3::identity() * eps;
    let Some(chol) = cov.cholesky() else {
        return f64::NEG_INFINITY;
    };
    let diff = candidate - centroid;
    let maha2 = diff.dot(&chol.solve(&diff));
    let l = chol.l();
    let log_det = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
    -1.5 * LOG_2PI - 0.5 * log_det - 0.5 * maha2
}

/// Trivariate Gaussian density of `candidate` under `N(centroid, spread + eps*I)`.
pub fn closeness(candidate: &Vec3, centroid: &Vec3, spread: &Matrix3<f64>, eps: f64) -> f64 {
    log_closeness(candidate, centroid, spread, eps).exp()
}
