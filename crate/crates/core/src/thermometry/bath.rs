//! Bath temperature from occupancy versus linewidth across a cooling series.

use serde::{Deserialize, Serialize};

use super::{CorrectionScope, HeterodyneResult, ThermometryConfig};
use crate::error::{Error, Result};
use crate::physics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathPoint {
    pub power_w: f64,
    pub gamma_eff_hz: f64,
    pub n_bar: f64,
    pub sigma_n_bar: f64,
}

impl BathPoint {
    /// Aggregate of one power step; σ is the standard error over accepted
    /// windows, plus the error of a correction shared by all of them.
    pub fn from_heterodyne(power_w: f64, r: &HeterodyneResult) -> Self {
        let mut sigma = if r.accepted > 1 {
            r.n_bar_std / (r.accepted as f64).sqrt()
        } else {
            r.windows.iter().find_map(|w| w.sigma_n_bar).unwrap_or(f64::NAN)
        };
        if r.correction_scope == CorrectionScope::PerRun && r.accepted > 1 {
            let shared = r
                .windows
                .iter()
                .filter(|w| w.excluded.is_none())
                .find_map(|w| Some((w.correction?, w.sigma_correction?)));
            if let Some((c, sc)) = shared {
                // n = 1/(R/C − 1): ∂n/∂C = n² R / C²
                let dn = r.n_bar_mean.powi(2) * r.r_light_mean / (c * c) * sc;
                sigma = sigma.hypot(dn);
            }
        }
        Self {
            power_w,
            gamma_eff_hz: r.gamma_eff_hz,
            n_bar: r.n_bar_mean,
            sigma_n_bar: sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathOptions {
    /// Subtract the back-action occupancies before fitting the thermal term.
    pub include_back_action: bool,
    /// Smallest allowed ratio of largest to smallest Γ_eff.
    pub min_leverage: f64,
}

impl Default for BathOptions {
    fn default() -> Self {
        Self {
            include_back_action: true,
            min_leverage: 3.0,
        }
    }
}

/// Model terms at one point, for plotting the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub power_w: f64,
    pub gamma_eff_hz: f64,
    pub n_th_residual: f64,
    pub n_ba_cool: f64,
    pub n_ba_probe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathTemperature {
    pub t_bath_k: f64,
    pub sigma_t_k: f64,
    pub n_th: f64,
    pub sigma_n_th: f64,
    pub chi_square: f64,
    pub reduced_chi_square: Option<f64>,
    pub leverage: f64,
    pub include_back_action: bool,
    pub points: Vec<BathPoint>,
    pub budget: Vec<BudgetPoint>,
}

/// Weighted least squares of `n̄ = n_th Γ_m/Γ_eff + n_ba_cool + n_ba_probe(P)` for `n_th`.
pub fn bath_temperature(series: &[BathPoint], config: &ThermometryConfig, options: BathOptions) -> Result<BathTemperature> {
    if series.len() < 3 {
        return Err(Error::pipeline("bath", format!("{} steps, need 3", series.len())));
    }
    for p in series {
        if !(p.sigma_n_bar > 0.0 && p.sigma_n_bar.is_finite()) {
            return Err(Error::pipeline("bath", format!("step at {} W has no usable uncertainty", p.power_w)));
        }
        if !(p.gamma_eff_hz > 0.0) {
            return Err(Error::pipeline("bath", format!("step at {} W has no linewidth", p.power_w)));
        }
    }
    let gmax = series.iter().map(|p| p.gamma_eff_hz).fold(f64::MIN, f64::max);
    let gmin = series.iter().map(|p| p.gamma_eff_hz).fold(f64::MAX, f64::min);
    let leverage = gmax / gmin;
    if leverage < options.min_leverage {
        return Err(Error::pipeline(
            "bath",
            format!("linewidths span only {leverage:.2}×, need {}×", options.min_leverage),
        ));
    }
    let light = config.light()?;
    let gm = light.gamma_m_hz;
    let mut budget = Vec::with_capacity(series.len());
    let (mut sxy, mut sxx) = (0.0, 0.0);
    let mut rows = Vec::with_capacity(series.len());
    for p in series {
        let (n_c, n_p) = if options.include_back_action { config.back_action(p.power_w)? } else { (0.0, 0.0) };
        let x = gm / p.gamma_eff_hz;
        let w = 1.0 / p.sigma_n_bar.powi(2);
        let y = p.n_bar - n_c - n_p;
        sxy += w * x * y;
        sxx += w * x * x;
        rows.push((x, y, w, n_c, n_p));
    }
    let n_th = sxy / sxx;
    let sigma_n_th = 1.0 / sxx.sqrt();
    let chi_square: f64 = rows.iter().map(|&(x, y, w, _, _)| w * (y - n_th * x).powi(2)).sum();
    for (p, &(x, _, _, n_c, n_p)) in series.iter().zip(&rows) {
        budget.push(BudgetPoint {
            power_w: p.power_w,
            gamma_eff_hz: p.gamma_eff_hz,
            n_th_residual: n_th * x,
            n_ba_cool: n_c,
            n_ba_probe: n_p,
        });
    }
    let omega = light.omega_m();
    let t = physics::temperature_from_occupancy(n_th.max(f64::MIN_POSITIVE), omega)?;
    let per_quantum = t / n_th.max(f64::MIN_POSITIVE);
    Ok(BathTemperature {
        t_bath_k: t,
        sigma_t_k: per_quantum * sigma_n_th,
        n_th,
        sigma_n_th,
        chi_square,
        reduced_chi_square: (series.len() > 1).then(|| chi_square / (series.len() - 1) as f64),
        leverage,
        include_back_action: options.include_back_action,
        points: series.to_vec(),
        budget,
    })
}
