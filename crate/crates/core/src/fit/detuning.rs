//! Probe detuning from the sideband ratios of several high-occupancy modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{cavity_filter_ratio_derivative, cavity_filter_ratio_unchecked};

const SCAN_POINTS: usize = 4001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    /// Mode angular frequency, rad/s.
    pub omega_m: f64,
    pub ratio: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningFit {
    /// rad/s
    pub delta_probe: f64,
    /// rad/s
    pub uncertainty: f64,
    pub chi_square: f64,
    pub reduced_chi_square: Option<f64>,
    /// Two local minima within 1% in cost; the one nearer zero was kept.
    pub ambiguous: bool,
    pub modes: usize,
}

fn cost(points: &[RatioPoint], delta: f64, kappa: f64) -> f64 {
    points
        .iter()
        .map(|p| ((p.ratio - cavity_filter_ratio_unchecked(delta, p.omega_m, kappa)) / p.sigma).powi(2))
        .sum()
}

// weighted Gauss-Newton on one parameter, with step halving
fn refine(points: &[RatioPoint], mut delta: f64, kappa: f64, lo: f64, hi: f64) -> f64 {
    let mut c = cost(points, delta, kappa);
    for _ in 0..100 {
        let (mut num, mut den) = (0.0, 0.0);
        for p in points {
            let w = 1.0 / (p.sigma * p.sigma);
            let d = cavity_filter_ratio_derivative(delta, p.omega_m, kappa);
            let r = p.ratio - cavity_filter_ratio_unchecked(delta, p.omega_m, kappa);
            num += w * d * r;
            den += w * d * d;
        }
        if den == 0.0 {
            break;
        }
        let mut step = num / den;
        let mut moved = false;
        for _ in 0..60 {
            let cand = (delta + step).clamp(lo, hi);
            let cc = cost(points, cand, kappa);
            if cc <= c {
                moved = cand != delta;
                delta = cand;
                c = cc;
                break;
            }
            step *= 0.5;
        }
        if !moved || step.abs() <= 1e-15 * kappa {
            break;
        }
    }
    delta
}

/// Weighted least squares of `ratio_i ≈ L(Δ−Ω_i)/L(Δ+Ω_i)` over Δ in `(−κ/2, κ/2)`.
///
/// The thermal factor `(n̄+1)/n̄` of each mode is taken as 1.
pub fn fit_detuning(points: &[RatioPoint], kappa: f64) -> Result<DetuningFit> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa", "must be > 0"));
    }
    if points.len() < 2 {
        return Err(Error::invalid("ratios", format!("{} modes, need at least 2", points.len())));
    }
    for p in points {
        if !(p.ratio > 0.0 && p.ratio.is_finite()) {
            return Err(Error::invalid("ratios", format!("ratio {} at Ω = {}", p.ratio, p.omega_m)));
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{} at Ω = {}", p.sigma, p.omega_m)));
        }
        if !(p.omega_m > 0.0) {
            return Err(Error::invalid("omega_m", "must be > 0"));
        }
    }
    let half = 0.5 * kappa;
    let h = kappa / (SCAN_POINTS + 1) as f64;
    let grid: Vec<f64> = (1..=SCAN_POINTS).map(|i| -half + i as f64 * h).collect();
    let costs: Vec<f64> = grid.iter().map(|&d| cost(points, d, kappa)).collect();
    let mut minima = Vec::new();
    for i in 1..SCAN_POINTS - 1 {
        if costs[i] <= costs[i - 1] && costs[i] <= costs[i + 1] && (costs[i] < costs[i - 1] || costs[i] < costs[i + 1]) {
            let d = refine(points, grid[i], kappa, grid[i - 1], grid[i + 1]);
            minima.push((d, cost(points, d, kappa)));
        }
    }
    // all ratios exactly on a flat cost: every point ties
    if minima.is_empty() && costs.iter().all(|&c| c == costs[0]) {
        minima.push((0.0, costs[0]));
    }
    if minima.is_empty() {
        let edge = if costs[0] < costs[SCAN_POINTS - 1] { "lower" } else { "upper" };
        return Err(Error::NoMinimumInBracket(format!("cost decreases toward the {edge} bracket edge ±κ/2")));
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    let best = minima[0];
    let tie_cut = best.1 * 1.01 + 1e-300;
    let ties: Vec<_> = minima.iter().filter(|m| m.1 <= tie_cut && (m.0 - best.0).abs() > 2.0 * h).collect();
    let ambiguous = !ties.is_empty();
    let chosen = ties.into_iter().chain(std::iter::once(&best)).min_by(|a, b| a.0.abs().total_cmp(&b.0.abs())).copied().unwrap_or(best);
    let delta = chosen.0;
    let info: f64 = points
        .iter()
        .map(|p| (cavity_filter_ratio_derivative(delta, p.omega_m, kappa) / p.sigma).powi(2))
        .sum();
    let uncertainty = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };
    let chi_square = chosen.1;
    let dof = points.len() - 1;
    Ok(DetuningFit {
        delta_probe: delta,
        uncertainty,
        chi_square,
        reduced_chi_square: (dof > 0).then(|| chi_square / dof as f64),
        ambiguous,
        modes: points.len(),
    })
}
