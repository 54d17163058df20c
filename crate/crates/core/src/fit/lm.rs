//! Levenberg-Marquardt for small dense least-squares problems.
//!
//! Minimizes `½ Σ r_i(p)²` with a caller-supplied analytic Jacobian. Damping
//! follows Nielsen's gain-ratio update with Marquardt's diagonal scaling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative step size, in the scaled norm.
    pub xtol: f64,
    /// Relative cost change.
    pub ftol: f64,
    /// Largest cosine between the residual vector and a Jacobian column.
    pub gtol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-10,
            ftol: 1e-12,
            gtol: 1e-6,
        }
    }
}

/// Residuals and their Jacobian `J[i, j] = ∂r_i/∂p_j`.
pub trait Problem {
    fn residual_count(&self) -> usize;
    /// Returns false when `p` is outside the model's domain.
    fn residuals(&self, p: &[f64], out: &mut [f64]) -> bool;
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `Σ r²` at the solution.
    pub chi_square: f64,
    pub iterations: usize,
    /// `JᵀJ` at the solution.
    pub normal_matrix: DMatrix<f64>,
}

impl LmOutcome {
    /// Inverse of `JᵀJ`, or `None` if it is singular.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let n = self.normal_matrix.nrows();
        // scale to unit diagonal before inverting; the raw matrix can span many decades
        let d: Vec<f64> = (0..n).map(|i| self.normal_matrix[(i, i)].sqrt()).collect();
        if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return None;
        }
        let scaled = DMatrix::from_fn(n, n, |i, j| self.normal_matrix[(i, j)] / (d[i] * d[j]));
        let inv = scaled.cholesky()?.inverse();
        Some(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j])))
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub fn minimize<P: Problem>(problem: &P, start: &[f64], cfg: &LmConfig) -> Result<LmOutcome> {
    let n = start.len();
    let m = problem.residual_count();
    if m < n {
        return Err(Error::DegenerateFit(format!("{m} residuals for {n} parameters")));
    }
    let mut p = start.to_vec();
    let mut r = vec![0.0; m];
    if !problem.residuals(&p, &mut r) {
        return Err(Error::DegenerateFit("initial guess outside the model domain".into()));
    }
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::DegenerateFit("non-finite residuals at the initial guess".into()));
    }
    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; m];
    // dimensionless: the damping term is λ·diag(JᵀJ)
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut scale = vec![0.0_f64; n];
    let mut iterations = 0;
    // residuals that shrank this far are the rounding floor of an exact fit
    let exact_floor = 1e-9 * cost.sqrt();

    loop {
        problem.jacobian(&p, &mut jac);
        let jtj = jac.tr_mul(&jac);
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        for i in 0..n {
            scale[i] = scale[i].max(jtj[(i, i)]);
        }

        // gradient test: every Jacobian column nearly orthogonal to the residuals
        let rnorm = cost.sqrt();
        let grad_cos = (0..n)
            .map(|i| {
                let col = jtj[(i, i)].sqrt();
                if col == 0.0 || rnorm == 0.0 {
                    0.0
                } else {
                    g[i].abs() / (col * rnorm)
                }
            })
            .fold(0.0, f64::max);
        if cost == 0.0 || grad_cos <= cfg.gtol * 1e-3 {
            return Ok(LmOutcome {
                params: p,
                chi_square: cost,
                iterations,
                normal_matrix: jtj,
            });
        }

        let mut accepted = false;
        while !accepted {
            iterations += 1;
            if iterations > cfg.max_iterations {
                return Err(Error::NotConverged {
                    iterations: cfg.max_iterations,
                    reason: format!("iteration limit, gradient cosine {grad_cos:.3e}"),
                    last_iterate: p,
                });
            }
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * scale[i].max(1e-300);
            }
            let rhs = -&g;
            let Some(chol) = a.cholesky() else {
                lambda *= nu;
                nu *= 2.0;
                continue;
            };
            let delta = chol.solve(&rhs);
            let candidate: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let ok = problem.residuals(&candidate, &mut trial);
            let new_cost = if ok { sum_sq(&trial) } else { f64::INFINITY };
            // predicted reduction of Σr² under the linear model
            let mut predicted = 0.0;
            for i in 0..n {
                predicted += delta[i] * (lambda * scale[i] * delta[i] - g[i]);
            }
            let rho = if predicted > 0.0 { (cost - new_cost) / predicted } else { -1.0 };
            if new_cost.is_finite() && rho > 0.0 {
                let step_norm: f64 = (0..n).map(|i| scale[i] * delta[i] * delta[i]).sum::<f64>().sqrt();
                let p_norm: f64 = (0..n).map(|i| scale[i] * p[i] * p[i]).sum::<f64>().sqrt();
                let rel_change = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                p = candidate;
                std::mem::swap(&mut r, &mut trial);
                cost = new_cost;
                lambda *= (1.0_f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                accepted = true;
                let small_step = step_norm <= cfg.xtol * (p_norm + cfg.xtol);
                let flat = rel_change <= cfg.ftol;
                if small_step || flat || cost == 0.0 {
                    problem.jacobian(&p, &mut jac);
                    let jtj = jac.tr_mul(&jac);
                    let g = jac.tr_mul(&DVector::from_column_slice(&r));
                    let rnorm = cost.sqrt();
                    let cosine = (0..n)
                        .map(|i| {
                            let col = jtj[(i, i)].sqrt();
                            if col == 0.0 || rnorm == 0.0 {
                                0.0
                            } else {
                                g[i].abs() / (col * rnorm)
                            }
                        })
                        .fold(0.0, f64::max);
                    if cosine <= cfg.gtol || cost.sqrt() <= exact_floor {
                        return Ok(LmOutcome {
                            params: p,
                            chi_square: cost,
                            iterations,
                            normal_matrix: jtj,
                        });
                    }
                }
            } else {
                lambda *= nu;
                nu *= 2.0;
                // the trust region shrank below xtol without finding descent
                let step_norm: f64 = (0..n).map(|i| scale[i] * delta[i] * delta[i]).sum::<f64>().sqrt();
                let p_norm: f64 = (0..n).map(|i| scale[i] * p[i] * p[i]).sum::<f64>().sqrt();
                if step_norm <= cfg.xtol * (p_norm + cfg.xtol) || cost.sqrt() <= exact_floor {
                    return Ok(LmOutcome {
                        params: p,
                        chi_square: cost,
                        iterations,
                        normal_matrix: jtj,
                    });
                }
                if !lambda.is_finite() || lambda > 1e40 {
                    return Err(Error::NotConverged {
                        iterations,
                        reason: "damping blew up without finding a descent step".into(),
                        last_iterate: p,
                    });
                }
            }
        }
    }
}
