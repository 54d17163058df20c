//! Ground-truth spectra of the cooled membrane, in both detection schemes.
//!
//! Peaks are ideal Lorentzians. A homodyne peak has area `2 g² (n̄ + 1/2)`
//! (Hz² in cavity-frequency units) and width Γ_eff; a heterodyne mode shows
//! up as two sidebands at `Ω ± Δ_LO` with areas proportional to
//! `(n̄+1) L(Δp − Ω)` (Stokes, upper) and `n̄ L(Δp + Ω)` (anti-Stokes, lower).

pub mod spectrum;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::physics::constants::{angular_to_hz, TWO_PI};
use crate::physics::{
    self, lorentzian_unchecked, BeamSpec, CavitySpec, MechanicalMode, OccupationBudget,
};
pub use spectrum::{DetectionKind, Spectrum, SpectrumMeta, SpectrumUnits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeRole {
    /// Strongly coupled twin, cooled by the beam; the thermometry target.
    Light,
    /// Weakly coupled twin, left hot; its sidebands only see the cavity filter.
    Heavy,
    /// Other weakly coupled drum mode used for detuning calibration.
    Auxiliary,
}

impl std::str::FromStr for ModeRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "light" => Ok(ModeRole::Light),
            "heavy" => Ok(ModeRole::Heavy),
            "aux" | "auxiliary" => Ok(ModeRole::Auxiliary),
            other => Err(format!("unknown mode role `{other}` (light, heavy or aux)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Occupancy {
    /// Thermal plus back-action budget, recomputed at every power step.
    Budget,
    /// Held at a configured value regardless of power.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMode {
    pub label: String,
    pub role: ModeRole,
    pub mode: MechanicalMode,
    pub occupancy: Occupancy,
    /// Optical damping per watt of cooling power, rad/s/W.
    pub damping_per_watt: f64,
    /// Optical-spring red shift per watt, rad/s/W.
    pub spring_per_watt: f64,
}

/// Probe detuning versus time as a polynomial, `c0 + c1 t + c2 t²` (rad/s, t in s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningDrift {
    pub coefficients: Vec<f64>,
}

impl DetuningDrift {
    pub fn constant(delta: f64) -> Self {
        Self {
            coefficients: vec![delta],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Background `offset + slope·(f − f_ref)`, with `f_ref` the centre of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearFloor {
    pub offset: f64,
    /// Per Hz.
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousPeak {
    pub frequency_hz: f64,
    pub height: f64,
    pub width_hz: f64,
}

/// A reference line of exactly known area, placed in homodyne spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTone {
    pub frequency_hz: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub f_start: f64,
    pub f_step: f64,
    pub bins: usize,
}

impl Grid {
    pub fn spanning(f_start: f64, f_stop: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::invalid("bins", "need at least 2 bins"));
        }
        ensure_finite("f_start", f_start)?;
        if !(f_stop > f_start) {
            return Err(Error::invalid("f_stop", "must exceed f_start"));
        }
        Ok(Self {
            f_start,
            f_step: (f_stop - f_start) / (bins - 1) as f64,
            bins,
        })
    }

    pub fn center(&self) -> f64 {
        self.f_start + 0.5 * (self.bins - 1) as f64 * self.f_step
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.f_step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub cavity: CavitySpec,
    /// Probe power; its detuning field is the drift value at t = 0.
    pub probe: BeamSpec,
    pub drift: DetuningDrift,
    pub cool_detuning: f64,
    pub cool_powers: Vec<f64>,
    pub delta_lo: f64,
    pub modes: Vec<ScenarioMode>,
    pub t_bath: f64,
    /// Bath heating per watt of cooling power, K/W.
    pub heating_per_watt: f64,
    /// Share of the light-mode homodyne area at the top power that comes
    /// from excess laser noise (a term quadratic in Γ_eff in A·Γ_eff).
    pub extra_noise_fraction: f64,
    pub grid: Grid,
    pub homodyne_floor: LinearFloor,
    pub heterodyne_floor: LinearFloor,
    pub homodyne_spurious: Vec<SpuriousPeak>,
    pub heterodyne_spurious: Vec<SpuriousPeak>,
    pub calibration_tone: Option<CalibrationTone>,
    /// Sideband area per phonon for a unit-weight mode at zero detuning.
    pub heterodyne_gain: f64,
    pub averaging_count: u32,
    pub windows: usize,
    pub window_duration: f64,
    pub rng_seed: u64,
    pub noise: bool,
}

/// What the synthesizer put into one mode at one power step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTruth {
    pub label: String,
    pub role: ModeRole,
    pub center_hz: f64,
    pub gamma_eff_hz: f64,
    pub n_bar: f64,
    pub budget: Option<OccupationBudget>,
    /// Homodyne peak area, Hz², including any excess-noise part.
    pub homodyne_area: f64,
    pub excess_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTruth {
    pub step: usize,
    pub cool_power_w: f64,
    pub t_bath_k: f64,
    pub n_th: f64,
    pub modes: Vec<ModeTruth>,
    /// Probe detuning at each window midpoint, Hz.
    pub probe_detuning_hz: Vec<f64>,
}

impl StepTruth {
    pub fn mode(&self, label: &str) -> Option<&ModeTruth> {
        self.modes.iter().find(|m| m.label == label)
    }
}

fn lorentz_density(f: f64, center: f64, fwhm: f64) -> f64 {
    let h = 0.5 * fwhm;
    h / (std::f64::consts::PI * ((f - center) * (f - center) + h * h))
}

impl SynthScenario {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("kappa", self.cavity.kappa)?;
        ensure_positive("delta_lo", self.delta_lo)?;
        ensure_positive("t_bath", self.t_bath)?;
        ensure_non_negative("heating_per_watt", self.heating_per_watt)?;
        if !(0.0..1.0).contains(&self.extra_noise_fraction) {
            return Err(Error::invalid("extra_noise_fraction", "must lie in [0, 1)"));
        }
        if self.cool_powers.is_empty() {
            return Err(Error::invalid("cool_powers", "power schedule is empty"));
        }
        for &p in &self.cool_powers {
            // the probe term scales as 1/P_cool and has no finite value at zero power
            ensure_positive("cool_powers", p)?;
        }
        if !physics::is_cooling_detuning(self.cool_detuning) {
            return Err(Error::invalid("cool_detuning", "cooling beam must be red detuned (< 0)"));
        }
        if self.drift.coefficients.is_empty() || self.drift.coefficients.len() > 3 {
            return Err(Error::invalid("drift", "one to three polynomial coefficients"));
        }
        if self.averaging_count < 1 {
            return Err(Error::invalid("averaging_count", "must be >= 1"));
        }
        if self.windows < 1 {
            return Err(Error::invalid("windows", "must be >= 1"));
        }
        ensure_non_negative("window_duration", self.window_duration)?;
        ensure_positive("heterodyne_gain", self.heterodyne_gain)?;
        if self.grid.bins < 2 || !(self.grid.f_step > 0.0) {
            return Err(Error::invalid("grid", "need >= 2 bins and a positive step"));
        }
        let mut labels = std::collections::HashSet::new();
        for m in &self.modes {
            m.mode.validate()?;
            if !labels.insert(m.label.as_str()) {
                return Err(Error::invalid("modes", format!("duplicate mode label `{}`", m.label)));
            }
            ensure_non_negative("damping_per_watt", m.damping_per_watt)?;
            ensure_finite("spring_per_watt", m.spring_per_watt)?;
            if let Occupancy::Fixed(n) = m.occupancy {
                ensure_positive("n_bar", n)?;
            }
        }
        // sidebands of different drum modes must not interleave; twins of one
        // (m, n) pair are quasi-degenerate by construction and exempt
        for (i, a) in self.modes.iter().enumerate() {
            for b in &self.modes[i + 1..] {
                let same_pair = a.mode.indices.m == b.mode.indices.m && a.mode.indices.n == b.mode.indices.n;
                if !same_pair && (a.mode.omega_m - b.mode.omega_m).abs() <= 2.0 * self.delta_lo {
                    return Err(Error::invalid(
                        "delta_lo",
                        format!("2·Δ_LO exceeds the spacing of modes `{}` and `{}`", a.label, b.label),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.cool_powers.len()
    }

    pub fn cool_beam(&self, step: usize) -> Result<BeamSpec> {
        let p = *self
            .cool_powers
            .get(step)
            .ok_or_else(|| Error::invalid("step", format!("{step} outside the {}-step schedule", self.steps())))?;
        BeamSpec::cooling(p, self.cool_detuning)
    }

    /// Probe detuning at the midpoint of a window, rad/s.
    pub fn probe_detuning(&self, window_index: usize) -> f64 {
        self.drift.eval((window_index as f64 + 0.5) * self.window_duration)
    }

    pub fn probe_at(&self, window_index: usize) -> Result<BeamSpec> {
        BeamSpec::probe(self.probe.power, self.probe_detuning(window_index))
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step >= self.steps() {
            return Err(Error::invalid("step", format!("{step} outside the {}-step schedule", self.steps())));
        }
        Ok(())
    }

    /// Per-mode physics at one power step. The probe term uses the drift value
    /// at t = 0, i.e. `probe.detuning`.
    pub fn step_truth(&self, step: usize) -> Result<StepTruth> {
        self.check_step(step)?;
        let cool = self.cool_beam(step)?;
        let p = cool.power;
        let t_bath = self.t_bath + self.heating_per_watt * p;
        let kappa = self.cavity.kappa;
        let mut n_th_light = 0.0;
        let mut modes = Vec::with_capacity(self.modes.len());
        for sm in &self.modes {
            let m = &sm.mode;
            let gamma_eff = m.gamma_m + sm.damping_per_watt * p;
            let omega = m.omega_m - sm.spring_per_watt * p;
            if omega <= 0.0 {
                return Err(Error::invalid("spring_per_watt", format!("mode `{}` pushed to negative frequency", sm.label)));
            }
            let g_hz = angular_to_hz(m.effective_g0());
            let (n_bar, budget, awp) = match sm.occupancy {
                Occupancy::Fixed(n) => (n, None, None),
                Occupancy::Budget => {
                    let n_th = physics::n_thermal(t_bath, m.omega_m)?;
                    if sm.role == ModeRole::Light {
                        n_th_light = n_th;
                    }
                    let n_c = physics::n_ba_cool(cool.detuning, m.omega_m, kappa)?;
                    let n_p = physics::n_ba_probe(&self.probe, &cool, m.omega_m, kappa)?;
                    let budget = physics::n_total(n_th, m.gamma_m, gamma_eff, n_c, n_p)?;
                    let awp = physics::area_width_product(
                        g_hz,
                        angular_to_hz(m.gamma_m),
                        angular_to_hz(gamma_eff),
                        n_th,
                        n_c,
                        n_p,
                    )?;
                    (budget.n_total, Some(budget), Some(awp))
                }
            };
            let gamma_hz = angular_to_hz(gamma_eff);
            let base_area = match awp {
                Some(awp) => awp / gamma_hz,
                None => 2.0 * g_hz * g_hz * (n_bar + 0.5),
            };
            modes.push(ModeTruth {
                label: sm.label.clone(),
                role: sm.role,
                center_hz: angular_to_hz(omega),
                gamma_eff_hz: gamma_hz,
                n_bar,
                budget,
                homodyne_area: base_area,
                excess_area: 0.0,
            });
        }
        if self.extra_noise_fraction > 0.0 {
            self.add_excess_noise(&mut modes)?;
        }
        let probe_detuning_hz = (0..self.windows).map(|w| angular_to_hz(self.probe_detuning(w))).collect();
        Ok(StepTruth {
            step,
            cool_power_w: p,
            t_bath_k: t_bath,
            n_th: n_th_light,
            modes,
            probe_detuning_hz,
        })
    }

    /// Excess laser noise: `A·Γ` of the light mode gains `c·Γ²`, with `c`
    /// fixed so the excess is the configured share of the area at top power.
    fn add_excess_noise(&self, modes: &mut [ModeTruth]) -> Result<()> {
        let top = self
            .cool_powers
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let Some(idx) = self.modes.iter().position(|m| m.role == ModeRole::Light) else {
            return Ok(());
        };
        let mut plain = self.clone();
        plain.extra_noise_fraction = 0.0;
        let top_truth = plain.step_truth(top)?;
        let t = &top_truth.modes[idx];
        let f = self.extra_noise_fraction;
        let c = f / (1.0 - f) * t.homodyne_area * t.gamma_eff_hz / (t.gamma_eff_hz * t.gamma_eff_hz);
        let m = &mut modes[idx];
        m.excess_area = c * m.gamma_eff_hz;
        m.homodyne_area += m.excess_area;
        Ok(())
    }

    fn blank(&self, kind: DetectionKind, step: usize, window_index: usize) -> Result<Spectrum> {
        let floor = match kind {
            DetectionKind::Homodyne => self.homodyne_floor,
            DetectionKind::Heterodyne => self.heterodyne_floor,
        };
        let f_ref = self.grid.center();
        let values = (0..self.grid.bins)
            .map(|i| floor.offset + floor.slope * (self.grid.frequency(i) - f_ref))
            .collect();
        Ok(Spectrum {
            f_start: self.grid.f_start,
            f_step: self.grid.f_step,
            values,
            kind,
            units: match kind {
                DetectionKind::Homodyne => SpectrumUnits::FrequencyNoise,
                DetectionKind::Heterodyne => SpectrumUnits::Raw,
            },
            averaging_count: self.averaging_count,
            window_index,
            window_duration: self.window_duration,
            meta: SpectrumMeta {
                source: String::new(),
                step: Some(step),
                cool_power_w: Some(self.cool_beam(step)?.power),
            },
        })
    }

    fn add_line(&self, spectrum: &mut Spectrum, center: f64, fwhm: f64, area: f64) {
        if area == 0.0 {
            return;
        }
        for (i, v) in spectrum.values.iter_mut().enumerate() {
            *v += area * lorentz_density(self.grid.frequency(i), center, fwhm);
        }
    }

    fn add_spurious(&self, spectrum: &mut Spectrum, peaks: &[SpuriousPeak]) {
        for p in peaks {
            // height parameterization: area = height · π · width / 2
            let area = p.height * std::f64::consts::PI * 0.5 * p.width_hz;
            self.add_line(spectrum, p.frequency_hz, p.width_hz, area);
        }
    }

    /// Noiseless homodyne spectrum of one power step.
    pub fn synth_homodyne(&self, step: usize) -> Result<Spectrum> {
        let truth = self.step_truth(step)?;
        let mut s = self.blank(DetectionKind::Homodyne, step, 0)?;
        for m in &truth.modes {
            self.add_line(&mut s, m.center_hz, m.gamma_eff_hz, m.homodyne_area);
        }
        self.add_spurious(&mut s, &self.homodyne_spurious);
        if let Some(tone) = self.calibration_tone {
            self.add_line(&mut s, tone.frequency_hz, 2.0 * self.grid.f_step, tone.area);
        }
        s.meta.source = format!("homodyne step {step}");
        Ok(s)
    }

    /// Noiseless heterodyne spectrum of one window of one power step.
    pub fn synth_heterodyne(&self, step: usize, window_index: usize) -> Result<Spectrum> {
        if window_index >= self.windows {
            return Err(Error::invalid("window_index", format!("{window_index} outside {} windows", self.windows)));
        }
        let truth = self.step_truth(step)?;
        let mut s = self.blank(DetectionKind::Heterodyne, step, window_index)?;
        let delta_p = self.probe_detuning(window_index);
        let kappa = self.cavity.kappa;
        let lo_hz = angular_to_hz(self.delta_lo);
        for (sm, m) in self.modes.iter().zip(&truth.modes) {
            let omega = TWO_PI * m.center_hz;
            let norm = 1.0 / lorentzian_unchecked(omega, kappa);
            let scale = self.heterodyne_gain * sm.mode.coupling_weight * sm.mode.coupling_weight;
            let stokes = scale * (m.n_bar + 1.0) * lorentzian_unchecked(delta_p - omega, kappa) * norm;
            let anti = scale * m.n_bar * lorentzian_unchecked(delta_p + omega, kappa) * norm;
            self.add_line(&mut s, m.center_hz + lo_hz, m.gamma_eff_hz, stokes);
            self.add_line(&mut s, m.center_hz - lo_hz, m.gamma_eff_hz, anti);
        }
        self.add_spurious(&mut s, &self.heterodyne_spurious);
        s.meta.source = format!("heterodyne step {step} window {window_index}");
        Ok(s)
    }

    /// Noise stream of a spectrum: homodyne steps and heterodyne windows never share one.
    pub fn stream_id(kind: DetectionKind, step: usize, window_index: usize) -> u64 {
        let low = match kind {
            DetectionKind::Homodyne => 0,
            DetectionKind::Heterodyne => window_index as u64 + 1,
        };
        ((step as u64) << 32) | low
    }
}

/// Multiplies every bin by an independent Gamma(N, 1/N) draw, the statistics
/// of an N-fold averaged periodogram. The k-th draw of stream
/// `(seed, stream_id)` goes to bin k.
pub fn apply_measurement_noise(spectrum: &Spectrum, rng_seed: u64, stream_id: u64) -> Result<Spectrum> {
    let n = spectrum.averaging_count;
    if n < 1 {
        return Err(Error::invalid("averaging_count", "must be >= 1"));
    }
    let gamma = Gamma::new(n as f64, 1.0 / n as f64).map_err(|e| Error::invalid("averaging_count", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(stream_id);
    let mut out = spectrum.clone();
    for v in &mut out.values {
        *v *= gamma.sample(&mut rng);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SeriesStep {
    pub power: f64,
    pub truth: StepTruth,
    pub homodyne: Spectrum,
    pub heterodyne: Vec<Spectrum>,
}

/// Every spectrum of the scenario: one homodyne per power step and one
/// heterodyne per (step, window), noisy when the scenario asks for noise.
pub fn cooling_series(scenario: &SynthScenario) -> Result<Vec<SeriesStep>> {
    scenario.validate()?;
    let noisy = |s: Spectrum, kind, step, w| -> Result<Spectrum> {
        if scenario.noise {
            apply_measurement_noise(&s, scenario.rng_seed, SynthScenario::stream_id(kind, step, w))
        } else {
            Ok(s)
        }
    };
    (0..scenario.steps())
        .into_par_iter()
        .map(|step| {
            let truth = scenario.step_truth(step)?;
            let homodyne = noisy(scenario.synth_homodyne(step)?, DetectionKind::Homodyne, step, 0)?;
            let heterodyne = (0..scenario.windows)
                .into_par_iter()
                .map(|w| noisy(scenario.synth_heterodyne(step, w)?, DetectionKind::Heterodyne, step, w))
                .collect::<Result<Vec<_>>>()?;
            Ok(SeriesStep {
                power: truth.cool_power_w,
                truth,
                homodyne,
                heterodyne,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
