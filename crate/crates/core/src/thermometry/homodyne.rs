//! Area×width regression of calibrated homodyne peaks across a cooling series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ThermometryConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_lorentzian, fit_weighted_polynomial, LineFit, LorentzianFit, WeightedPoint};
use crate::physics;
use crate::synth::{Spectrum, SpectrumUnits};

/// One regression point: `A·Γ` of the light peak at one cooling power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaWidthPoint {
    pub power_w: f64,
    pub gamma_hz: f64,
    /// Hz³
    pub area_width: f64,
    pub sigma_area_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: usize,
    pub power_w: f64,
    pub fit: LorentzianFit,
    pub gamma_eff_hz: f64,
    pub sigma_gamma_hz: f64,
    pub area_width: f64,
    pub sigma_area_width: f64,
    pub n_th_residual: f64,
    pub n_ba_cool: f64,
    pub n_ba_probe: f64,
    /// Thermal residual plus back-action, with the fitted width.
    pub n_bar: f64,
    /// From the peak area and the fitted coupling, `A/(2g²) − 1/2`.
    pub n_bar_from_area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub chi_square_model: f64,
    pub dof_model: usize,
    pub chi_square_line: f64,
    pub dof_line: usize,
    pub chi_square_quadratic: Option<f64>,
    pub dof_quadratic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneResult {
    pub steps: Vec<StepResult>,
    /// Steps dropped before the regression, with the reason.
    pub excluded: Vec<(usize, String)>,
    /// Overall scale `2 g² Γ_m` of the no-free-slope model, Hz³.
    pub scale: f64,
    pub sigma_scale: f64,
    pub g0_hz: f64,
    pub sigma_g0_hz: f64,
    pub line: LineFit,
    pub slope_over_offset: f64,
    pub sigma_slope_over_offset: f64,
    /// What the same line fit gives on the model's own predictions.
    pub model_slope_over_offset: f64,
    /// Bath heating at top power implied by the excess slope, K.
    pub heating_delta_t_k: f64,
    pub sigma_heating_delta_t_k: f64,
    pub quadratic: Option<LineFit>,
    /// Share of `A` at top power carried by the quadratic term.
    pub extra_noise_fraction: Option<f64>,
    pub sigma_extra_noise_fraction: Option<f64>,
    pub comparison: ModelComparison,
    pub calibration_factor: Option<f64>,
    pub masks: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn ratio_sigma(fit: &LineFit) -> (f64, f64) {
    let (a, b) = (fit.coefficients[0], fit.coefficients[1]);
    let r = b / a;
    let rel = (fit.sigma(1) / b).powi(2) + (fit.sigma(0) / a).powi(2) - 2.0 * fit.cov(0, 1) / (a * b);
    (r, r.abs() * rel.max(0.0).sqrt())
}

/// Bath heating that grows linearly to `ΔT` at the top linewidth: fits
/// `A·Γ = S·u + Q·n_th (Γ − Γ_m)/(Γ_max − Γ_m)` and returns `T·Q/S` with its 1σ.
fn heating_fit(points: &[AreaWidthPoint], u: &[f64], n_th: f64, gm: f64, g_max: f64, t: f64) -> (f64, f64) {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &ui) in points.iter().zip(u) {
        let w = 1.0 / p.sigma_area_width.powi(2);
        let xi = n_th * (p.gamma_hz - gm) / (g_max - gm);
        a11 += w * ui * ui;
        a12 += w * ui * xi;
        a22 += w * xi * xi;
        b1 += w * ui * p.area_width;
        b2 += w * xi * p.area_width;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det > 0.0) {
        return (f64::NAN, f64::NAN);
    }
    let s = (a22 * b1 - a12 * b2) / det;
    let q = (a11 * b2 - a12 * b1) / det;
    let (css, cqq, csq) = (a22 / det, a11 / det, -a12 / det);
    let h = q / s;
    let var = (cqq / (s * s)) + (q * q * css / s.powi(4)) - 2.0 * q * csq / s.powi(3);
    (t * h, t * var.max(0.0).sqrt())
}

/// Fits the no-free-slope model, a free line and a free quadratic to `A·Γ` versus Γ.
///
/// The model is `2 g² Γ_m [n_th + (n_ba_cool + n_ba_probe(P) + 1/2) Γ/Γ_m]`
/// with only the overall scale free; `n_th` comes from the sensor temperature.
pub fn regress_area_width(points: &[AreaWidthPoint], config: &ThermometryConfig) -> Result<HomodyneResult> {
    if points.len() < 3 {
        return Err(Error::pipeline("homodyne", format!("{} usable power steps, need 3", points.len())));
    }
    let light = config.light()?;
    let gm = light.gamma_m_hz;
    let n_th = physics::n_thermal(config.t_sensor_k, light.omega_m())?;
    let mut u = Vec::with_capacity(points.len());
    for p in points {
        if !(p.sigma_area_width > 0.0) {
            return Err(Error::pipeline("homodyne", format!("non-positive uncertainty at {} W", p.power_w)));
        }
        let (n_c, n_p) = config.back_action(p.power_w)?;
        u.push(n_th + (n_c + n_p + 0.5) * p.gamma_hz / gm);
    }
    let (mut suy, mut suu) = (0.0, 0.0);
    for (p, &ui) in points.iter().zip(&u) {
        let w = 1.0 / p.sigma_area_width.powi(2);
        suy += w * ui * p.area_width;
        suu += w * ui * ui;
    }
    let scale = suy / suu;
    let sigma_scale = 1.0 / suu.sqrt();
    let g = (scale / (2.0 * gm)).sqrt();
    let sigma_g = g * 0.5 * sigma_scale / scale;
    let weight = if light.coupling_weight > 0.0 { light.coupling_weight } else { 1.0 };
    let chi_model: f64 = points
        .iter()
        .zip(&u)
        .map(|(p, &ui)| ((p.area_width - scale * ui) / p.sigma_area_width).powi(2))
        .sum();

    let pts: Vec<WeightedPoint> = points
        .iter()
        .map(|p| WeightedPoint::new(p.gamma_hz, p.area_width, p.sigma_area_width))
        .collect();
    let line = fit_weighted_polynomial(&pts, 1)?;
    let (r, sigma_r) = ratio_sigma(&line);
    let predicted: Vec<WeightedPoint> = points
        .iter()
        .zip(&u)
        .map(|(p, &ui)| WeightedPoint::new(p.gamma_hz, scale * ui, p.sigma_area_width))
        .collect();
    let model_line = fit_weighted_polynomial(&predicted, 1)?;
    let r_model = model_line.coefficients[1] / model_line.coefficients[0];
    let g_max = points.iter().map(|p| p.gamma_hz).fold(f64::MIN, f64::max);
    let (heating, sigma_heating) = heating_fit(points, &u, n_th, gm, g_max, config.t_sensor_k);

    let quadratic = if points.len() >= 3 { fit_weighted_polynomial(&pts, 2).ok() } else { None };
    let (fraction, sigma_fraction) = match &quadratic {
        Some(q) => {
            let (c0, c1, c2) = (q.coefficients[0], q.coefficients[1], q.coefficients[2]);
            let x = g_max;
            let total = c0 + c1 * x + c2 * x * x;
            let f = c2 * x * x / total;
            let grad = [-c2 * x * x / total.powi(2), -c2 * x.powi(3) / total.powi(2), x * x * (c0 + c1 * x) / total.powi(2)];
            let mut var = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    var += grad[i] * grad[j] * q.cov(i, j);
                }
            }
            (Some(f), Some(var.max(0.0).sqrt()))
        }
        None => (None, None),
    };
    let n = points.len();
    let comparison = ModelComparison {
        chi_square_model: chi_model,
        dof_model: n - 1,
        chi_square_line: line.chi_square,
        dof_line: n - 2,
        chi_square_quadratic: quadratic.as_ref().map(|q| q.chi_square),
        dof_quadratic: n.saturating_sub(3),
    };
    Ok(HomodyneResult {
        steps: Vec::new(),
        excluded: Vec::new(),
        scale,
        sigma_scale,
        g0_hz: g / weight,
        sigma_g0_hz: sigma_g / weight,
        line,
        slope_over_offset: r,
        sigma_slope_over_offset: sigma_r,
        model_slope_over_offset: r_model,
        heating_delta_t_k: heating,
        sigma_heating_delta_t_k: sigma_heating,
        quadratic,
        extra_noise_fraction: fraction,
        sigma_extra_noise_fraction: sigma_fraction,
        comparison,
        calibration_factor: None,
        masks: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Factor turning raw detector units into cavity-frequency units, from the tone.
fn calibration_factor(spectrum: &Spectrum, config: &ThermometryConfig) -> Result<f64> {
    let tone = config
        .calibration_tone
        .ok_or_else(|| Error::pipeline("homodyne", "raw spectrum and no calibration tone configured"))?;
    let half = 60.0 * spectrum.f_step;
    let fit = fit_lorentzian(spectrum, (tone.frequency_hz - half, tone.frequency_hz + half), &[])
        .map_err(|e| Error::pipeline("homodyne", format!("calibration tone fit: {e}")))?;
    if !(fit.area > 0.0) {
        return Err(Error::pipeline("homodyne", "calibration tone has no positive area"));
    }
    Ok(tone.area / fit.area)
}

/// Fits the light peak at every power step, then regresses `A·Γ` on Γ.
///
/// Each entry is `(cooling power W, spectrum)`.
pub fn homodyne_pipeline(spectra: &[(f64, Spectrum)], config: &ThermometryConfig) -> Result<HomodyneResult> {
    config.validate()?;
    let light = config.light()?;
    let mut masks = config.masks_excluding(&light.label, false);
    if let Some(tone) = config.calibration_tone {
        let w = spectra.first().map_or(1.0, |s| 5.0 * s.1.f_step);
        masks.push((tone.frequency_hz - w, tone.frequency_hz + w));
    }
    let window = (
        light.frequency_hz + light.homodyne_window_hz.0,
        light.frequency_hz + light.homodyne_window_hz.1,
    );
    let mut order: Vec<usize> = (0..spectra.len()).collect();
    order.sort_by(|&a, &b| spectra[a].0.total_cmp(&spectra[b].0).then(a.cmp(&b)));

    let fits: Vec<(usize, Result<(LorentzianFit, Option<f64>)>)> = order
        .par_iter()
        .map(|&i| {
            let (_, s) = &spectra[i];
            let run = || -> Result<(LorentzianFit, Option<f64>)> {
                let (spec, factor) = if s.units == SpectrumUnits::Raw {
                    let k = calibration_factor(s, config)?;
                    (s.scaled(k), Some(k))
                } else {
                    (s.clone(), None)
                };
                let fit = fit_lorentzian(&spec, window, &masks)?;
                if !(fit.area > 0.0 && fit.fwhm > 0.0) {
                    return Err(Error::DegenerateFit(format!("area {} fwhm {}", fit.area, fit.fwhm)));
                }
                Ok((fit, factor))
            };
            (i, run())
        })
        .collect();

    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    let mut kept: Vec<(usize, f64, LorentzianFit)> = Vec::new();
    let mut factors = Vec::new();
    for (i, r) in fits {
        match r {
            Ok((fit, k)) => {
                kept.push((i, spectra[i].0, fit));
                factors.extend(k);
            }
            Err(e) => {
                warnings.push(format!("step {i} ({} W) excluded: {e}", spectra[i].0));
                excluded.push((i, e.to_string()));
            }
        }
    }
    let points: Vec<AreaWidthPoint> = kept
        .iter()
        .map(|(_, p, f)| {
            let (aw, s) = f.area_width();
            AreaWidthPoint {
                power_w: *p,
                gamma_hz: f.fwhm,
                area_width: aw,
                sigma_area_width: s,
            }
        })
        .collect();
    let mut result = regress_area_width(&points, config)?;
    for pair in kept.windows(2) {
        let (a, b) = (&pair[0].2, &pair[1].2);
        if b.fwhm + 3.0 * (a.sigma_fwhm.hypot(b.sigma_fwhm)) < a.fwhm {
            warnings.push(format!(
                "linewidth drops from {:.3} Hz to {:.3} Hz between {} W and {} W",
                a.fwhm, b.fwhm, pair[0].1, pair[1].1
            ));
        }
    }
    let n_th = physics::n_thermal(config.t_sensor_k, light.omega_m())?;
    let g_eff = result.g0_hz * if light.coupling_weight > 0.0 { light.coupling_weight } else { 1.0 };
    let mut steps = Vec::with_capacity(kept.len());
    for (i, p, fit) in kept {
        let (n_c, n_p) = config.back_action(p)?;
        let gamma = fit.fwhm.max(light.gamma_m_hz);
        let budget = physics::n_total(n_th, light.gamma_m_hz, gamma, n_c, n_p)?;
        let (aw, saw) = fit.area_width();
        steps.push(StepResult {
            step: i,
            power_w: p,
            gamma_eff_hz: fit.fwhm,
            sigma_gamma_hz: fit.sigma_fwhm,
            area_width: aw,
            sigma_area_width: saw,
            n_th_residual: budget.n_th_residual,
            n_ba_cool: n_c,
            n_ba_probe: n_p,
            n_bar: budget.n_total,
            n_bar_from_area: fit.area / (2.0 * g_eff * g_eff) - 0.5,
            fit,
        });
    }
    steps.sort_by_key(|s| s.step);
    excluded.sort_by_key(|e| e.0);
    result.steps = steps;
    result.excluded = excluded;
    result.calibration_factor = (!factors.is_empty()).then(|| factors.iter().sum::<f64>() / factors.len() as f64);
    result.masks = masks;
    result.warnings = warnings;
    Ok(result)
}
