//! Sideband-asymmetry occupancy with the cavity-filter bias removed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, weighted_mean, CorrectionMethod, CorrectionScope, ModeSpec, ThermometryConfig};
use crate::error::{Error, Result};
use crate::fit::{fit_detuning, fit_sideband_doublet, fit_weighted_polynomial, DetuningFit, DoubletFit, LineFit, RatioPoint, WeightedPoint};
use crate::physics::constants::{angular_to_hz, hz_to_angular};
use crate::physics::{cavity_filter_ratio_derivative, cavity_filter_ratio_unchecked};
use crate::synth::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_index: usize,
    /// Window midpoint, s.
    pub midpoint_s: f64,
    pub light: Option<DoubletFit>,
    pub r_light: Option<f64>,
    pub sigma_r_light: Option<f64>,
    pub r_heavy: Option<f64>,
    pub sigma_r_heavy: Option<f64>,
    /// Fitted probe detuning, Hz.
    pub delta_probe_hz: Option<f64>,
    pub sigma_delta_probe_hz: Option<f64>,
    pub correction: Option<f64>,
    pub sigma_correction: Option<f64>,
    pub r_corrected: Option<f64>,
    pub sigma_r_corrected: Option<f64>,
    pub n_bar: Option<f64>,
    pub sigma_n_bar: Option<f64>,
    /// `1/(R_light − 1)`, without the filter correction.
    pub n_bar_raw: Option<f64>,
    pub excluded: Option<String>,
    pub flags: Vec<String>,
}

impl WindowResult {
    fn new(window_index: usize, midpoint_s: f64) -> Self {
        Self {
            window_index,
            midpoint_s,
            light: None,
            r_light: None,
            sigma_r_light: None,
            r_heavy: None,
            sigma_r_heavy: None,
            delta_probe_hz: None,
            sigma_delta_probe_hz: None,
            correction: None,
            sigma_correction: None,
            r_corrected: None,
            sigma_r_corrected: None,
            n_bar: None,
            sigma_n_bar: None,
            n_bar_raw: None,
            excluded: None,
            flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneResult {
    pub correction_method: CorrectionMethod,
    pub correction_scope: CorrectionScope,
    pub windows: Vec<WindowResult>,
    pub accepted: usize,
    pub excluded: usize,
    pub n_bar_mean: f64,
    pub n_bar_std: f64,
    /// `1/(⟨R⟩ − 1)` over the accepted windows.
    pub n_bar_from_mean_ratio: f64,
    pub r_corrected_mean: f64,
    pub r_light_mean: f64,
    /// Mean of the uncorrected per-window estimates; `None` if no window has `R_light > 1`.
    pub n_bar_raw_mean: Option<f64>,
    pub n_bar_raw_std: Option<f64>,
    pub gamma_eff_hz: f64,
    pub sigma_gamma_eff_hz: f64,
    pub light_center_hz: f64,
    /// Probe detuning (Hz) against window midpoint (s).
    pub detuning_track: Option<LineFit>,
    pub masks: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Multimode correction for a run: per-window detuning fits and their track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodeCorrection {
    /// Per window, in input order: the detuning fit or the reason it failed.
    pub fits: Vec<std::result::Result<DetuningFit, String>>,
    /// Δ (Hz) used for each window and its 1σ.
    pub delta_hz: Vec<(f64, f64)>,
    /// Set where the value came from the track rather than the window's own fit.
    pub from_track: Vec<bool>,
    pub track: Option<LineFit>,
}

fn doublet_for(spectrum: &Spectrum, mode: &ModeSpec, config: &ThermometryConfig) -> Result<DoubletFit> {
    let masks = config.masks_excluding(&mode.label, true);
    let fit = fit_sideband_doublet(spectrum, mode.frequency_hz, config.delta_lo, mode.doublet, &masks)?;
    if !(fit.area_stokes > 0.0 && fit.area_antistokes > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "mode `{}`: non-positive sideband area ({}, {})",
            mode.label, fit.area_stokes, fit.area_antistokes
        )));
    }
    Ok(fit)
}

/// `R_heavy` from the heavy-twin doublet of one window, with its 1σ.
pub fn correction_heavy_twin(spectrum: &Spectrum, config: &ThermometryConfig) -> Result<(f64, f64, DoubletFit)> {
    let heavy = config
        .heavy()
        .ok_or_else(|| Error::invalid("modes", "heavy-twin correction needs a heavy mode"))?;
    let fit = doublet_for(spectrum, heavy, config)?;
    Ok((fit.ratio(), fit.ratio_uncertainty(), fit))
}

/// Order-1 track of Δ against time, raised to order 2 when that lowers χ² by more than 4.
fn detuning_track(points: &[WeightedPoint]) -> Option<LineFit> {
    let line = match points.len() {
        0 => return None,
        1 => fit_weighted_polynomial(points, 0).ok()?,
        _ => fit_weighted_polynomial(points, 1).ok()?,
    };
    if points.len() >= 4 {
        if let Ok(quad) = fit_weighted_polynomial(points, 2) {
            if line.chi_square - quad.chi_square > 4.0 {
                return Some(quad);
            }
        }
    }
    Some(line)
}

/// Fits every auxiliary doublet of each window, then the detuning that explains their ratios.
pub fn correction_multimode(windows: &[Spectrum], config: &ThermometryConfig) -> Result<MultimodeCorrection> {
    let aux: Vec<&ModeSpec> = config.auxiliary().collect();
    if aux.len() < 2 {
        return Err(Error::invalid("modes", format!("multimode correction needs 2 auxiliary modes, found {}", aux.len())));
    }
    let kappa = config.cavity.kappa;
    let fits: Vec<std::result::Result<DetuningFit, String>> = windows
        .par_iter()
        .map(|s| {
            let mut pts = Vec::with_capacity(aux.len());
            let mut failed = Vec::new();
            for m in &aux {
                match doublet_for(s, m, config) {
                    Ok(f) => pts.push(RatioPoint {
                        omega_m: hz_to_angular(f.mean_center),
                        ratio: f.ratio(),
                        sigma: f.ratio_uncertainty().max(1e-12 * f.ratio()),
                    }),
                    Err(e) => failed.push(format!("{}: {e}", m.label)),
                }
            }
            if pts.len() < 2 {
                return Err(format!("only {} auxiliary doublets fitted ({})", pts.len(), failed.join("; ")));
            }
            fit_detuning(&pts, kappa).map_err(|e| e.to_string())
        })
        .collect();
    let track_pts: Vec<WeightedPoint> = windows
        .iter()
        .zip(&fits)
        .filter_map(|(s, f)| {
            f.as_ref()
                .ok()
                .map(|d| WeightedPoint::new(s.midpoint_time(), angular_to_hz(d.delta_probe), angular_to_hz(d.uncertainty)))
        })
        .collect();
    let track = detuning_track(&track_pts);
    let mut delta_hz = Vec::with_capacity(windows.len());
    let mut from_track = Vec::with_capacity(windows.len());
    for (s, f) in windows.iter().zip(&fits) {
        match (f, &track) {
            (Ok(d), _) => {
                delta_hz.push((angular_to_hz(d.delta_probe), angular_to_hz(d.uncertainty)));
                from_track.push(false);
            }
            (Err(_), Some(t)) => {
                let t0 = s.midpoint_time();
                delta_hz.push((t.eval(t0), t.eval_sigma(t0)));
                from_track.push(true);
            }
            (Err(e), None) => {
                return Err(Error::pipeline("multimode", format!("no detuning in any window: {e}")));
            }
        }
    }
    Ok(MultimodeCorrection {
        fits,
        delta_hz,
        from_track,
        track,
    })
}

/// Per-window `R_light`, corrected by the configured method, and the aggregate occupancy.
pub fn heterodyne_pipeline(windows: &[Spectrum], config: &ThermometryConfig) -> Result<HeterodyneResult> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::pipeline("heterodyne", "no windows"));
    }
    let light = config.light()?;
    let mut sorted: Vec<&Spectrum> = windows.iter().collect();
    sorted.sort_by_key(|s| s.window_index);
    let sorted: Vec<Spectrum> = sorted.into_iter().cloned().collect();
    let mut warnings = Vec::new();
    let mut results: Vec<WindowResult> = sorted
        .par_iter()
        .map(|s| {
            let mut r = WindowResult::new(s.window_index, s.midpoint_time());
            match doublet_for(s, light, config) {
                Ok(f) => {
                    r.r_light = Some(f.ratio());
                    r.sigma_r_light = Some(f.ratio_uncertainty());
                    r.n_bar_raw = (f.ratio() > 1.0).then(|| 1.0 / (f.ratio() - 1.0));
                    r.light = Some(f);
                }
                Err(e) => r.excluded = Some(format!("light doublet: {e}")),
            }
            r
        })
        .collect();

    let mut method = config.correction;
    let kappa = config.cavity.kappa;
    if method == CorrectionMethod::HeavyTwin {
        let heavy: Vec<Result<(f64, f64, DoubletFit)>> = sorted.par_iter().map(|s| correction_heavy_twin(s, config)).collect();
        if heavy.iter().any(|h| matches!(h, Err(Error::UnresolvableDoublet { .. }))) {
            warnings.push("heavy-twin doublet unresolvable; falling back to the multimode correction".into());
            method = CorrectionMethod::Multimode;
        } else {
            for (r, h) in results.iter_mut().zip(heavy) {
                match h {
                    Ok((ratio, sigma, _)) => {
                        r.r_heavy = Some(ratio);
                        r.sigma_r_heavy = Some(sigma);
                        r.correction = Some(ratio);
                        r.sigma_correction = Some(sigma);
                    }
                    Err(e) => {
                        if r.excluded.is_none() {
                            r.excluded = Some(format!("heavy doublet: {e}"));
                        }
                    }
                }
            }
            if config.correction_scope == CorrectionScope::PerRun {
                let v: Vec<(f64, f64)> = results.iter().filter_map(|r| Some((r.r_heavy?, r.sigma_r_heavy?))).collect();
                if v.is_empty() {
                    return Err(Error::pipeline("heterodyne", "no heavy-twin ratio in any window"));
                }
                let (m, s) = weighted_mean(&v);
                for r in &mut results {
                    r.correction = Some(m);
                    r.sigma_correction = Some(s);
                    r.flags.push("run-mean correction".into());
                }
            }
        }
    }
    let mut track = None;
    if method == CorrectionMethod::Multimode {
        let mm = correction_multimode(&sorted, config)?;
        let run_mean = (config.correction_scope == CorrectionScope::PerRun)
            .then(|| {
                let v: Vec<(f64, f64)> = mm
                    .fits
                    .iter()
                    .filter_map(|f| f.as_ref().ok().map(|d| (angular_to_hz(d.delta_probe), angular_to_hz(d.uncertainty))))
                    .collect();
                weighted_mean(&v)
            });
        for (i, r) in results.iter_mut().enumerate() {
            let (d, sd) = run_mean.unwrap_or(mm.delta_hz[i]);
            r.delta_probe_hz = Some(mm.delta_hz[i].0);
            r.sigma_delta_probe_hz = Some(mm.delta_hz[i].1);
            if mm.from_track[i] {
                let reason = mm.fits[i].as_ref().err().cloned().unwrap_or_default();
                r.flags.push(format!("detuning from track ({reason})"));
            }
            if run_mean.is_some() {
                r.flags.push("run-mean correction".into());
            }
            let center = r.light.as_ref().map_or(light.frequency_hz, |f| f.mean_center);
            let omega = hz_to_angular(center);
            let dw = hz_to_angular(d);
            r.correction = Some(cavity_filter_ratio_unchecked(dw, omega, kappa));
            r.sigma_correction = Some(cavity_filter_ratio_derivative(dw, omega, kappa).abs() * hz_to_angular(sd));
        }
        track = mm.track;
    }

    for r in &mut results {
        if r.excluded.is_some() {
            continue;
        }
        let (Some(rl), Some(sl), Some(c), Some(sc)) = (r.r_light, r.sigma_r_light, r.correction, r.sigma_correction) else {
            r.excluded = Some("no correction available".into());
            continue;
        };
        let rc = rl / c;
        let src = rc * ((sl / rl).powi(2) + (sc / c).powi(2)).sqrt();
        r.r_corrected = Some(rc);
        r.sigma_r_corrected = Some(src);
        if rc <= 1.0 {
            r.excluded = Some(format!("corrected ratio {rc:.6} ≤ 1"));
            continue;
        }
        r.n_bar = Some(1.0 / (rc - 1.0));
        r.sigma_n_bar = Some(src / (rc - 1.0).powi(2));
    }

    let accepted: Vec<&WindowResult> = results.iter().filter(|r| r.excluded.is_none()).collect();
    if accepted.is_empty() {
        let reasons: Vec<String> = results
            .iter()
            .map(|r| format!("window {}: {}", r.window_index, r.excluded.as_deref().unwrap_or("?")))
            .collect();
        return Err(Error::pipeline("heterodyne", format!("all windows excluded ({})", reasons.join("; "))));
    }
    for r in results.iter().filter(|r| r.excluded.is_some()) {
        warnings.push(format!("window {} excluded: {}", r.window_index, r.excluded.as_deref().unwrap_or("")));
    }
    let n: Vec<f64> = accepted.iter().filter_map(|r| r.n_bar).collect();
    let (n_mean, n_std) = mean_std(&n);
    let rc: Vec<f64> = accepted.iter().filter_map(|r| r.r_corrected).collect();
    let (rc_mean, _) = mean_std(&rc);
    let rl: Vec<f64> = results.iter().filter_map(|r| r.r_light).collect();
    let (rl_mean, _) = mean_std(&rl);
    let raw: Vec<f64> = results.iter().filter_map(|r| r.n_bar_raw).collect();
    let (raw_mean, raw_std) = mean_std(&raw);
    let widths: Vec<f64> = accepted.iter().filter_map(|r| r.light.map(|f| f.fwhm)).collect();
    let (g_mean, g_std) = mean_std(&widths);
    let centers: Vec<f64> = accepted.iter().filter_map(|r| r.light.map(|f| f.mean_center)).collect();
    let (c_mean, _) = mean_std(&centers);
    let excluded = results.len() - accepted.len();
    let accepted_count = accepted.len();
    Ok(HeterodyneResult {
        correction_method: method,
        correction_scope: config.correction_scope,
        accepted: accepted_count,
        excluded,
        n_bar_mean: n_mean,
        n_bar_std: n_std,
        n_bar_from_mean_ratio: 1.0 / (rc_mean - 1.0),
        r_corrected_mean: rc_mean,
        r_light_mean: rl_mean,
        n_bar_raw_mean: (!raw.is_empty()).then_some(raw_mean),
        n_bar_raw_std: (!raw.is_empty()).then_some(raw_std),
        gamma_eff_hz: g_mean,
        sigma_gamma_eff_hz: if widths.len() > 1 { g_std / (widths.len() as f64).sqrt() } else { accepted[0].light.map_or(0.0, |f| f.sigma_fwhm) },
        light_center_hz: c_mean,
        detuning_track: track,
        masks: config.masks_excluding(&light.label, true),
        warnings,
        windows: results,
    })
}
