//! Lorentzian peaks on a linear background, single and as sideband pairs.
//!
//! Peaks are parameterized by area: `A (Γ/2) / (π ((f − c)² + (Γ/2)²))`.
//! The background is `b0 + b1 (f − f_ref)` with `f_ref` the centre of the
//! fitted bins. Bins are weighted with `σ = model / √N`, the spread of an
//! N-fold averaged periodogram: a first unweighted pass supplies the model
//! for the weights, a second pass fits with them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmConfig, LmOutcome, Problem};
use crate::error::{Error, Result};
use crate::synth::Spectrum;

const MIN_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
    pub background_offset: f64,
    pub background_slope: f64,
    /// Frequency at which `background_offset` applies, Hz.
    pub reference_hz: f64,
    pub sigma_center: f64,
    pub sigma_fwhm: f64,
    pub sigma_area: f64,
    /// Covariance of area and width, used to propagate errors on `A·Γ`.
    pub cov_area_fwhm: f64,
    pub reduced_chi_square: f64,
    pub bins: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl LorentzianFit {
    pub fn eval(&self, f: f64) -> f64 {
        self.background_offset + self.background_slope * (f - self.reference_hz) + peak(f, self.center, self.fwhm, self.area)
    }

    /// `A·Γ` and its standard deviation.
    pub fn area_width(&self) -> (f64, f64) {
        let v = self.area * self.fwhm;
        let var = (self.fwhm * self.sigma_area).powi(2)
            + (self.area * self.sigma_fwhm).powi(2)
            + 2.0 * self.area * self.fwhm * self.cov_area_fwhm;
        (v, var.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubletFit {
    pub mean_center: f64,
    pub fwhm: f64,
    /// Upper-frequency sideband, at `mean_center + half_splitting`.
    pub area_stokes: f64,
    pub area_antistokes: f64,
    pub half_splitting: f64,
    pub background_offset: f64,
    pub background_slope: f64,
    pub reference_hz: f64,
    pub sigma_center: f64,
    pub sigma_fwhm: f64,
    pub sigma_stokes: f64,
    pub sigma_antistokes: f64,
    pub cov_areas: f64,
    pub reduced_chi_square: f64,
    pub bins: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl DoubletFit {
    pub fn eval(&self, f: f64) -> f64 {
        self.background_offset
            + self.background_slope * (f - self.reference_hz)
            + peak(f, self.mean_center + self.half_splitting, self.fwhm, self.area_stokes)
            + peak(f, self.mean_center - self.half_splitting, self.fwhm, self.area_antistokes)
    }

    pub fn ratio(&self) -> f64 {
        self.area_stokes / self.area_antistokes
    }

    pub fn ratio_uncertainty(&self) -> f64 {
        let (s, a) = (self.area_stokes, self.area_antistokes);
        let r = s / a;
        let rel = (self.sigma_stokes / s).powi(2) + (self.sigma_antistokes / a).powi(2) - 2.0 * self.cov_areas / (s * a);
        r.abs() * rel.max(0.0).sqrt()
    }
}

/// Which bins of a spectrum take part in a doublet fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubletWindow {
    /// Bins within this distance of either sideband centre guess are used;
    /// at or above the half splitting the two ranges merge into one span.
    pub half_width: f64,
    /// How far from `mode_guess` the initial centre search may move, Hz.
    pub search: f64,
}

#[inline]
pub(crate) fn peak(f: f64, center: f64, fwhm: f64, area: f64) -> f64 {
    let h = 0.5 * fwhm;
    let u = f - center;
    area * h / (std::f64::consts::PI * (u * u + h * h))
}

// ∂peak/∂(center, fwhm, area)
#[inline]
fn peak_grad(f: f64, center: f64, fwhm: f64, area: f64) -> [f64; 3] {
    let h = 0.5 * fwhm;
    let u = f - center;
    let d = u * u + h * h;
    let pi = std::f64::consts::PI;
    [
        area * h * 2.0 * u / (pi * d * d),
        area * (u * u - h * h) / (2.0 * pi * d * d),
        h / (pi * d),
    ]
}

fn masked(f: f64, mask: &[(f64, f64)]) -> bool {
    mask.iter().any(|&(lo, hi)| f >= lo && f <= hi)
}

/// One sideband's bins with their baseline and smoothed excess.
struct Side {
    pts: Points,
    base: (f64, f64),
    e: Vec<f64>,
}

impl Side {
    /// Index of the bin nearest `f`, if one lies within 1.5 bins.
    fn at(&self, f: f64, df: f64) -> Option<usize> {
        let x = &self.pts.f;
        let k = x.partition_point(|&v| v < f);
        let cand = [k.saturating_sub(1), k.min(x.len() - 1)];
        let best = cand.into_iter().min_by(|&a, &b| (x[a] - f).abs().total_cmp(&(x[b] - f).abs()))?;
        ((x[best] - f).abs() <= 1.5 * df).then_some(best)
    }
}

/// Data points taking part in a fit.
#[derive(Debug, Clone)]
struct Points {
    f: Vec<f64>,
    y: Vec<f64>,
    f_ref: f64,
    n_avg: f64,
}

impl Points {
    fn collect(spectrum: &Spectrum, keep: impl Fn(f64) -> bool) -> Points {
        let mut f = Vec::new();
        let mut y = Vec::new();
        for (i, &v) in spectrum.values.iter().enumerate() {
            let fi = spectrum.frequency(i);
            if keep(fi) {
                f.push(fi);
                y.push(v);
            }
        }
        let f_ref = if f.is_empty() { 0.0 } else { 0.5 * (f[0] + f[f.len() - 1]) };
        Points {
            f,
            y,
            f_ref,
            n_avg: spectrum.averaging_count.max(1) as f64,
        }
    }

    /// Straight line through the medians of the outer tenths of the bins.
    fn edge_baseline(&self) -> (f64, f64) {
        let n = self.f.len();
        let k = (n / 10).max(3).min(n / 2);
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.total_cmp(b));
            v[v.len() / 2]
        };
        let mut left: Vec<f64> = self.y[..k].to_vec();
        let mut right: Vec<f64> = self.y[n - k..].to_vec();
        let fl = self.f[..k].iter().sum::<f64>() / k as f64;
        let fr = self.f[n - k..].iter().sum::<f64>() / k as f64;
        let (yl, yr) = (median(&mut left), median(&mut right));
        let slope = if fr > fl { (yr - yl) / (fr - fl) } else { 0.0 };
        let offset = yl + slope * (self.f_ref - fl);
        (offset, slope)
    }

    /// Excess over the baseline, smoothed with a short running mean.
    fn smoothed_excess(&self, base: (f64, f64), half: usize) -> Vec<f64> {
        let n = self.f.len();
        let e: Vec<f64> = (0..n).map(|i| self.y[i] - base.0 - base.1 * (self.f[i] - self.f_ref)).collect();
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + e[i];
        }
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(n);
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            })
            .collect()
    }

    /// Smoothed excess at the scale where its maximum stands out most
    /// against white noise, and the index of that maximum.
    fn best_scale_excess(&self, base: (f64, f64)) -> (Vec<f64>, usize) {
        let n = self.f.len();
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        let mut half = 0;
        while 2 * half + 1 <= n / 8 {
            let e = self.smoothed_excess(base, half);
            let i = (0..n).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap_or(0);
            let score = e[i] * ((2 * half + 1) as f64).sqrt();
            if best.as_ref().map_or(true, |b| score > b.0) {
                best = Some((score, e, i));
            }
            half = if half == 0 { 1 } else { half * 2 };
        }
        let (_, e, i) = best.unwrap_or_else(|| (0.0, self.smoothed_excess(base, 0), 0));
        (e, i)
    }

    /// Full width at half maximum around index `i` of `e`, Hz.
    fn half_max_width(&self, e: &[f64], i: usize, df: f64) -> f64 {
        let half = 0.5 * e[i];
        let mut lo = i;
        while lo > 0 && e[lo] > half {
            lo -= 1;
        }
        let mut hi = i;
        while hi + 1 < e.len() && e[hi] > half {
            hi += 1;
        }
        (self.f[hi] - self.f[lo]).max(2.0 * df)
    }
}

/// Weighted residuals for any linear combination of peaks on the shared background.
struct SpectralProblem<'a, M: Fn(&[f64], f64) -> f64, G: Fn(&[f64], f64, &mut [f64])> {
    pts: &'a Points,
    sigma: Vec<f64>,
    model: M,
    grad: G,
    valid: fn(&[f64]) -> bool,
}

impl<M: Fn(&[f64], f64) -> f64, G: Fn(&[f64], f64, &mut [f64])> Problem for SpectralProblem<'_, M, G> {
    fn residual_count(&self) -> usize {
        self.pts.f.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) -> bool {
        if !(self.valid)(p) {
            return false;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.pts.y[i] - (self.model)(p, self.pts.f[i])) / self.sigma[i];
        }
        true
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let mut g = vec![0.0; p.len()];
        for i in 0..self.pts.f.len() {
            (self.grad)(p, self.pts.f[i], &mut g);
            for (j, gj) in g.iter().enumerate() {
                out[(i, j)] = -gj / self.sigma[i];
            }
        }
    }
}

struct Solved {
    outcome: LmOutcome,
    cov: DMatrix<f64>,
    reduced_chi_square: f64,
}

fn solve_two_pass<M, G>(pts: &Points, start: Vec<f64>, model: M, grad: G, valid: fn(&[f64]) -> bool) -> Result<Solved>
where
    M: Fn(&[f64], f64) -> f64 + Copy,
    G: Fn(&[f64], f64, &mut [f64]) + Copy,
{
    let cfg = LmConfig::default();
    let mean = pts.y.iter().sum::<f64>() / pts.y.len() as f64;
    let flat = (mean.abs().max(f64::MIN_POSITIVE)) / pts.n_avg.sqrt();
    let first = SpectralProblem {
        pts,
        sigma: vec![flat; pts.f.len()],
        model,
        grad,
        valid,
    };
    let pass1 = minimize(&first, &start, &cfg)?;
    // a pass-1 model that dips to zero would give those bins all the weight
    let mut sorted = pts.y.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let floor = (0.1 * sorted[sorted.len() / 2]).max(1e-12 * mean.abs()).max(f64::MIN_POSITIVE);
    let sigma: Vec<f64> = pts
        .f
        .iter()
        .map(|&f| (model)(&pass1.params, f).max(floor) / pts.n_avg.sqrt())
        .collect();
    let second = SpectralProblem {
        pts,
        sigma,
        model,
        grad,
        valid,
    };
    let outcome = minimize(&second, &pass1.params, &cfg)?;
    let cov = outcome
        .covariance()
        .ok_or_else(|| Error::DegenerateFit("singular normal matrix at the solution".into()))?;
    let dof = (pts.f.len() - start.len()).max(1) as f64;
    let reduced_chi_square = outcome.chi_square / dof;
    Ok(Solved {
        outcome,
        cov,
        reduced_chi_square,
    })
}

/// Single Lorentzian plus linear background inside `window`, skipping `mask`.
pub fn fit_lorentzian(spectrum: &Spectrum, window: (f64, f64), mask: &[(f64, f64)]) -> Result<LorentzianFit> {
    spectrum.validate()?;
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::DegenerateFit(format!("empty window {lo}..{hi}")));
    }
    let pts = Points::collect(spectrum, |f| f >= lo && f <= hi && !masked(f, mask));
    if pts.f.len() < MIN_BINS {
        return Err(Error::DegenerateFit(format!(
            "window {lo}..{hi} Hz holds {} usable bins, need {MIN_BINS}",
            pts.f.len()
        )));
    }
    let df = spectrum.f_step;
    let base = pts.edge_baseline();
    let (e, imax) = pts.best_scale_excess(base);
    if e[imax] <= 0.0 {
        return Err(Error::DegenerateFit("no peak above the background".into()));
    }
    if imax == 0 || imax == e.len() - 1 {
        return Err(Error::DegenerateFit(format!(
            "peak maximum at the window edge ({} Hz)",
            pts.f[imax]
        )));
    }
    let width = pts.half_max_width(&e, imax, df);
    let area = 0.5 * std::f64::consts::PI * e[imax] * width;
    let f_ref = pts.f_ref;
    let start = vec![pts.f[imax] - f_ref, width, area, base.0, base.1];

    let model = move |p: &[f64], f: f64| p[3] + p[4] * (f - f_ref) + peak(f, f_ref + p[0], p[1], p[2]);
    let grad = move |p: &[f64], f: f64, g: &mut [f64]| {
        let [dc, dw, da] = peak_grad(f, f_ref + p[0], p[1], p[2]);
        g[0] = dc;
        g[1] = dw;
        g[2] = da;
        g[3] = 1.0;
        g[4] = f - f_ref;
    };
    let solved = solve_two_pass(&pts, start, model, grad, |p| p[1] > 0.0)?;
    let p = &solved.outcome.params;
    let c = &solved.cov;
    let fit = LorentzianFit {
        center: f_ref + p[0],
        fwhm: p[1],
        area: p[2],
        background_offset: p[3],
        background_slope: p[4],
        reference_hz: f_ref,
        sigma_center: c[(0, 0)].sqrt(),
        sigma_fwhm: c[(1, 1)].sqrt(),
        sigma_area: c[(2, 2)].sqrt(),
        cov_area_fwhm: c[(1, 2)],
        reduced_chi_square: solved.reduced_chi_square,
        bins: pts.f.len(),
        iterations: solved.outcome.iterations,
        converged: true,
    };
    Ok(fit)
}

/// Two Lorentzians of shared width at `c ± Δ_LO/2π` on a linear background.
///
/// `delta_lo` is angular (rad/s); everything else is in Hz. The splitting is
/// held fixed at the instrument value.
pub fn fit_sideband_doublet(
    spectrum: &Spectrum,
    mode_guess: f64,
    delta_lo: f64,
    window: DoubletWindow,
    mask: &[(f64, f64)],
) -> Result<DoubletFit> {
    spectrum.validate()?;
    let d = delta_lo / std::f64::consts::TAU;
    if !(d > 0.0) {
        return Err(Error::invalid("delta_lo", "must be > 0"));
    }
    let hw = window.half_width;
    if !(hw > 0.0) {
        return Err(Error::invalid("half_width", "must be > 0"));
    }
    let search = window.search.max(0.0);
    // guesses come from each sideband window on its own, so a broad line
    // under both does not drive the scale choice
    let reach = hw + search;
    let side = |center: f64| -> Result<Side> {
        let pts = Points::collect(spectrum, |f| (f - center).abs() <= reach && !masked(f, mask));
        if pts.f.len() < MIN_BINS {
            return Err(Error::DegenerateFit(format!(
                "sideband window around {center} Hz holds {} usable bins",
                pts.f.len()
            )));
        }
        let base = pts.edge_baseline();
        let (e, _) = pts.best_scale_excess(base);
        Ok(Side { pts, base, e })
    };
    let upper = side(mode_guess + d)?;
    let lower = side(mode_guess - d)?;
    let df = spectrum.f_step;
    let steps = (search / df).round() as i64;
    let mut best: Option<(f64, usize, usize, f64)> = None;
    for k in -steps..=steps {
        let c = mode_guess + k as f64 * df;
        if let (Some(iu), Some(il)) = (upper.at(c + d, df), lower.at(c - d, df)) {
            let s = upper.e[iu] + lower.e[il];
            if best.map_or(true, |b| s > b.0) {
                best = Some((s, iu, il, c));
            }
        }
    }
    let (_, iu, il, c0) = best.ok_or_else(|| Error::DegenerateFit("sideband positions fall in masked or empty bins".into()))?;
    let (eu, el) = (upper.e[iu], lower.e[il]);
    let (strong, i_strong, e_strong, e_weak) = if eu >= el { (&upper, iu, eu, el) } else { (&lower, il, el, eu) };
    if e_strong <= 0.0 {
        return Err(Error::DegenerateFit("no sideband above the background".into()));
    }
    let width = strong.pts.half_max_width(&strong.e, i_strong, df);
    if 2.0 * d < width / 5.0 {
        return Err(Error::UnresolvableDoublet {
            separation_hz: 2.0 * d,
            fwhm_hz: width,
        });
    }
    let a_strong = 0.5 * std::f64::consts::PI * e_strong * width;
    let a_weak = (0.5 * std::f64::consts::PI * e_weak.max(0.05 * e_strong) * width).max(1e-3 * a_strong);
    let (a_up, a_dn) = if eu >= el { (a_strong, a_weak) } else { (a_weak, a_strong) };

    let keep = |f: f64| ((f - (c0 + d)).abs() <= hw || (f - (c0 - d)).abs() <= hw) && !masked(f, mask);
    let pts = Points::collect(spectrum, keep);
    if pts.f.len() < MIN_BINS {
        return Err(Error::DegenerateFit(format!(
            "doublet window around {c0} Hz holds {} usable bins, need {MIN_BINS}",
            pts.f.len()
        )));
    }
    let f_ref = pts.f_ref;
    let (bu, bl) = (upper.base.0, lower.base.0);
    let (fu, fl) = (upper.pts.f_ref, lower.pts.f_ref);
    let b1 = if fu > fl { (bu - bl) / (fu - fl) } else { 0.0 };
    let b0 = bl + b1 * (f_ref - fl);
    let start = vec![c0 - f_ref, width, a_up, a_dn, b0, b1];
    let model = move |p: &[f64], f: f64| {
        let c = f_ref + p[0];
        p[4] + p[5] * (f - f_ref) + peak(f, c + d, p[1], p[2]) + peak(f, c - d, p[1], p[3])
    };
    let grad = move |p: &[f64], f: f64, g: &mut [f64]| {
        let c = f_ref + p[0];
        let up = peak_grad(f, c + d, p[1], p[2]);
        let dn = peak_grad(f, c - d, p[1], p[3]);
        g[0] = up[0] + dn[0];
        g[1] = up[1] + dn[1];
        g[2] = up[2];
        g[3] = dn[2];
        g[4] = 1.0;
        g[5] = f - f_ref;
    };
    let solved = solve_two_pass(&pts, start, model, grad, |p| p[1] > 0.0)?;
    let p = &solved.outcome.params;
    if 2.0 * d < p[1] / 5.0 {
        return Err(Error::UnresolvableDoublet {
            separation_hz: 2.0 * d,
            fwhm_hz: p[1],
        });
    }
    let c = &solved.cov;
    Ok(DoubletFit {
        mean_center: f_ref + p[0],
        fwhm: p[1],
        area_stokes: p[2],
        area_antistokes: p[3],
        half_splitting: d,
        background_offset: p[4],
        background_slope: p[5],
        reference_hz: f_ref,
        sigma_center: c[(0, 0)].sqrt(),
        sigma_fwhm: c[(1, 1)].sqrt(),
        sigma_stokes: c[(2, 2)].sqrt(),
        sigma_antistokes: c[(3, 3)].sqrt(),
        cov_areas: c[(2, 3)],
        reduced_chi_square: solved.reduced_chi_square,
        bins: pts.f.len(),
        iterations: solved.outcome.iterations,
        converged: true,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::synth::{apply_measurement_noise, DetectionKind, SpectrumMeta, SpectrumUnits};

    pub(crate) fn grid_spectrum(f_start: f64, f_step: f64, n: usize, n_avg: u32, f: impl Fn(f64) -> f64) -> Spectrum {
        Spectrum {
            f_start,
            f_step,
            values: (0..n).map(|i| f(f_start + i as f64 * f_step)).collect(),
            kind: DetectionKind::Heterodyne,
            units: SpectrumUnits::Raw,
            averaging_count: n_avg,
            window_index: 0,
            window_duration: 10.0,
            meta: SpectrumMeta::default(),
        }
    }

    fn single() -> Spectrum {
        grid_spectrum(369_800.0, 0.5, 801, 10, |f| 0.002 + 1e-7 * (f - 370e3) + peak(f, 370e3, 10.0, 1.0))
    }

    fn doublet(ratio: f64, fwhm: f64, n_avg: u32) -> Spectrum {
        // anti-Stokes peak twice the floor
        let s = 0.02 * std::f64::consts::PI * fwhm / 2.0;
        grid_spectrum(330e3, 2.0, 40_001, n_avg, move |f| {
            0.01 + peak(f, 370e3 + 9e3, fwhm, s * ratio) + peak(f, 370e3 - 9e3, fwhm, s)
        })
    }

    const LO: f64 = std::f64::consts::TAU * 9e3;

    fn wide() -> DoubletWindow {
        DoubletWindow {
            half_width: 9e3,
            search: 1e3,
        }
    }

    #[test]
    fn noiseless_peak_recovered() {
        let fit = fit_lorentzian(&single(), (369_800.0, 370_200.0), &[]).unwrap();
        assert!((fit.area - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.fwhm - 10.0).abs() < 1e-5);
        assert!((fit.center - 370e3).abs() < 1e-6);
        assert!(fit.reduced_chi_square < 1e-12);
        let (aw, _) = fit.area_width();
        assert!((aw - 10.0).abs() < 1e-5);
    }

    #[test]
    fn window_rules() {
        let s = single();
        assert!(matches!(fit_lorentzian(&s, (369_800.0, 369_810.0), &[]), Err(Error::DegenerateFit(_))));
        assert!(fit_lorentzian(&s, (369_800.0, 369_990.0), &[]).is_err());
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let p = [370e3, 12.0, 0.8];
        for f in [369_950.0, 370_003.0, 370_100.0] {
            let g = peak_grad(f, p[0], p[1], p[2]);
            for j in 0..3 {
                let h = [1e-3, 1e-5 * p[1], 1e-6 * p[2]][j];
                let mut a = p;
                let mut b = p;
                a[j] += h;
                b[j] -= h;
                let fd = (peak(f, a[0], a[1], a[2]) - peak(f, b[0], b[1], b[2])) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-12), "j={j} f={f}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn unmasked_spurious_peak_inflates_chi_square() {
        let clean = grid_spectrum(365e3, 1.0, 10_001, 10, |f| 0.01 + peak(f, 370e3, 800.0, 100.0));
        let noisy = apply_measurement_noise(&clean, 3, 1).unwrap();
        let ok = fit_lorentzian(&noisy, (365e3, 375e3), &[]).unwrap();
        assert!(ok.reduced_chi_square < 1.2, "{}", ok.reduced_chi_square);
        let spur = grid_spectrum(365e3, 1.0, 10_001, 10, |f| 0.01 + peak(f, 370e3, 800.0, 100.0) + peak(f, 371_500.0, 30.0, 6.0));
        let noisy = apply_measurement_noise(&spur, 3, 1).unwrap();
        let bad = fit_lorentzian(&noisy, (365e3, 375e3), &[]).unwrap();
        assert!(bad.reduced_chi_square > 2.0, "{}", bad.reduced_chi_square);
        let masked = fit_lorentzian(&noisy, (365e3, 375e3), &[(371_400.0, 371_600.0)]).unwrap();
        assert!(masked.reduced_chi_square < 1.2);
    }

    #[test]
    fn rescaling_moves_only_amplitudes() {
        let clean = grid_spectrum(365e3, 1.0, 10_001, 10, |f| 0.01 + peak(f, 370e3, 800.0, 10.0));
        let s = apply_measurement_noise(&clean, 8, 2).unwrap();
        let a = fit_lorentzian(&s, (365e3, 375e3), &[]).unwrap();
        let b = fit_lorentzian(&s.scaled(1e6), (365e3, 375e3), &[]).unwrap();
        // same minimizer, up to the solver tolerance
        assert!((b.area / 1e6 - a.area).abs() < 1e-3 * a.sigma_area);
        assert!((b.background_offset / 1e6 - a.background_offset).abs() < 1e-8 * a.background_offset);
        assert!((b.center - a.center).abs() < 1e-3 * a.sigma_center);
        assert!((b.fwhm - a.fwhm).abs() < 1e-3 * a.sigma_fwhm);
        assert!((b.sigma_area / 1e6 / a.sigma_area - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noiseless_doublet_ratio() {
        let s = doublet(4.87 / 3.87, 5000.0, 10);
        let fit = fit_sideband_doublet(&s, 370_400.0, LO, wide(), &[]).unwrap();
        assert!((fit.ratio() - 4.87 / 3.87).abs() < 1e-6, "{fit:?}");
        assert!((fit.ratio() - 1.2585).abs() < 2e-4);
        assert!((fit.mean_center - 370e3).abs() < 1e-4);
        assert!((fit.fwhm - 5000.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_doublet_has_unit_ratio() {
        let clean = doublet(1.0, 3000.0, 10);
        let s = apply_measurement_noise(&clean, 1, 1).unwrap();
        let fit = fit_sideband_doublet(&s, 370e3, LO, wide(), &[]).unwrap();
        assert!((fit.ratio() - 1.0).abs() < 3.0 * fit.ratio_uncertainty(), "{} ± {}", fit.ratio(), fit.ratio_uncertainty());
    }

    #[test]
    fn mirrored_axis_swaps_the_sidebands() {
        let clean = doublet(1.3, 4000.0, 10);
        let s = apply_measurement_noise(&clean, 4, 4).unwrap();
        let mut m = s.clone();
        m.values.reverse();
        // f' = 2·370 kHz − f maps the grid onto itself reversed
        m.f_start = 2.0 * 370e3 - s.f_stop();
        let a = fit_sideband_doublet(&s, 370e3, LO, wide(), &[]).unwrap();
        let b = fit_sideband_doublet(&m, 370e3, LO, wide(), &[]).unwrap();
        assert!((a.area_stokes - b.area_antistokes).abs() < 1e-7 * a.area_stokes);
        assert!((a.area_antistokes - b.area_stokes).abs() < 1e-7 * a.area_stokes);
        assert!((a.fwhm - b.fwhm).abs() < 1e-7 * a.fwhm);
    }

    #[test]
    fn unresolvable_doublet() {
        let s = grid_spectrum(60e3, 5.0, 124_001, 10, |f| 0.01 + peak(f, 379e3, 200e3, 1.0) + peak(f, 361e3, 200e3, 1.0));
        let window = DoubletWindow {
            half_width: 290e3,
            search: 1e3,
        };
        let err = fit_sideband_doublet(&s, 370e3, LO, window, &[]);
        assert!(matches!(err, Err(Error::UnresolvableDoublet { .. })), "{err:?}");
    }

    #[test]
    fn masked_heavy_twin_leaves_light_ratio() {
        let light = |f: f64| 0.01 + peak(f, 369e3 + 9e3, 3000.0, 4.87e-2) + peak(f, 369e3 - 9e3, 3000.0, 3.87e-2);
        let heavy = |f: f64| peak(f, 370e3 + 9e3, 2.0, 2e-2) + peak(f, 370e3 - 9e3, 2.0, 2e-2);
        let iso = grid_spectrum(330e3, 0.5, 160_001, 10, light);
        let both = grid_spectrum(330e3, 0.5, 160_001, 10, move |f| light(f) + heavy(f));
        let mask = [(379e3 - 150.0, 379e3 + 150.0), (361e3 - 150.0, 361e3 + 150.0)];
        let a = fit_sideband_doublet(&iso, 369e3, LO, wide(), &mask).unwrap();
        let b = fit_sideband_doublet(&both, 369e3, LO, wide(), &mask).unwrap();
        assert!((b.ratio() / a.ratio() - 1.0).abs() < 1e-3, "{} vs {}", b.ratio(), a.ratio());
    }
}
