//! Weighted polynomial regression of order 0, 1 or 2.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl WeightedPoint {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        Self { x, y, sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// `c[k]` multiplies `x^k`.
    pub coefficients: Vec<f64>,
    /// Row-major, `(order+1)²` entries.
    pub covariance: Vec<f64>,
    pub chi_square: f64,
    /// `None` when the fit has no degrees of freedom left.
    pub reduced_chi_square: Option<f64>,
    pub points: usize,
}

impl LineFit {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.coefficients.len() + j]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.cov(i, i).max(0.0).sqrt()
    }

    /// Standard deviation of the fitted curve at `x`.
    pub fn eval_sigma(&self, x: f64) -> f64 {
        let k = self.coefficients.len();
        let mut v = 0.0;
        for i in 0..k {
            for j in 0..k {
                v += x.powi(i as i32) * x.powi(j as i32) * self.cov(i, j);
            }
        }
        v.max(0.0).sqrt()
    }
}

/// Weighted least squares `y ≈ Σ c_k x^k`.
///
/// Exactly determined fits (order+1 points) are allowed and report no
/// reduced χ². Solved by QR on the column-scaled, weighted design matrix.
pub fn fit_weighted_polynomial(points: &[WeightedPoint], order: usize) -> Result<LineFit> {
    if order > 2 {
        return Err(Error::invalid("order", format!("{order} exceeds 2")));
    }
    let k = order + 1;
    if points.len() < k {
        return Err(Error::invalid("points", format!("{} points for order {order}", points.len())));
    }
    for p in points {
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{} at x = {}", p.sigma, p.x)));
        }
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::invalid("points", "non-finite coordinate"));
        }
    }
    let m = points.len();
    let design = DMatrix::from_fn(m, k, |i, j| points[i].x.powi(j as i32) / points[i].sigma);
    let rhs = DVector::from_iterator(m, points.iter().map(|p| p.y / p.sigma));
    let scale: Vec<f64> = (0..k).map(|j| design.column(j).norm()).collect();
    if scale.iter().any(|s| *s == 0.0) {
        return Err(Error::RankDeficient);
    }
    let scaled = DMatrix::from_fn(m, k, |i, j| design[(i, j)] / scale[j]);
    let qr = scaled.qr();
    let r = qr.r();
    let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * rmax) {
        return Err(Error::RankDeficient);
    }
    let qtb = qr.q().tr_mul(&rhs);
    let z = r.solve_upper_triangular(&qtb).ok_or(Error::RankDeficient)?;
    let coefficients: Vec<f64> = (0..k).map(|j| z[j] / scale[j]).collect();
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient)?;
    let cz = &rinv * rinv.transpose();
    let covariance: Vec<f64> = (0..k * k).map(|n| cz[(n / k, n % k)] / (scale[n / k] * scale[n % k])).collect();
    let chi_square: f64 = points
        .iter()
        .map(|p| {
            let fit = coefficients.iter().rev().fold(0.0, |acc, c| acc * p.x + c);
            ((p.y - fit) / p.sigma).powi(2)
        })
        .sum();
    let reduced_chi_square = (m > k).then(|| chi_square / (m - k) as f64);
    Ok(LineFit {
        coefficients,
        covariance,
        chi_square,
        reduced_chi_square,
        points: m,
    })
}
