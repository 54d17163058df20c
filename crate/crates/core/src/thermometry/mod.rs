//! End-to-end occupancy estimators: homodyne area×width regression and
//! heterodyne sideband asymmetry with cavity-filter correction, plus the
//! bath temperature from a cooling series.

mod bath;
mod heterodyne;
mod homodyne;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::DoubletWindow;
use crate::physics::constants::{angular_to_hz, hz_to_angular};
use crate::physics::{self, BeamSpec, CavitySpec};
use crate::synth::{CalibrationTone, ModeRole, Occupancy, SynthScenario};

pub use bath::{bath_temperature, BathOptions, BathPoint, BathTemperature, BudgetPoint};
pub use heterodyne::{
    correction_heavy_twin, correction_multimode, heterodyne_pipeline, HeterodyneResult, MultimodeCorrection,
    WindowResult,
};
pub use homodyne::{homodyne_pipeline, regress_area_width, AreaWidthPoint, HomodyneResult, ModelComparison, StepResult};

/// How the probe-detuning bias of `R_light` is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMethod {
    HeavyTwin,
    Multimode,
}

impl std::str::FromStr for CorrectionMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "heavy-twin" | "heavy_twin" => Ok(Self::HeavyTwin),
            "multimode" | "multimode-detuning" | "multimode_detuning" => Ok(Self::Multimode),
            other => Err(format!("unknown correction `{other}` (heavy-twin or multimode)")),
        }
    }
}

impl CorrectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::HeavyTwin => "heavy-twin",
            Self::Multimode => "multimode",
        }
    }
}

/// Whether each window gets its own correction or all share the run average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionScope {
    #[default]
    PerWindow,
    PerRun,
}

impl std::str::FromStr for CorrectionScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "per-window" | "window" => Ok(Self::PerWindow),
            "per-run" | "run" => Ok(Self::PerRun),
            other => Err(format!("unknown correction scope `{other}` (per-window or per-run)")),
        }
    }
}

/// A mode as the analysis sees it: nominal position, intrinsic width and
/// where to look for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub label: String,
    pub role: ModeRole,
    /// Unshifted mode frequency, Hz.
    pub frequency_hz: f64,
    /// Intrinsic linewidth from ring-down, Hz.
    pub gamma_m_hz: f64,
    /// Coupling at an antinode, Hz.
    pub g0_hz: f64,
    pub coupling_weight: f64,
    /// Homodyne fit window relative to `frequency_hz`, Hz.
    pub homodyne_window_hz: (f64, f64),
    pub doublet: DoubletWindow,
    /// Half width of the masks placed over this mode's lines when another mode is fitted, Hz.
    pub mask_half_width_hz: f64,
}

impl ModeSpec {
    pub fn omega_m(&self) -> f64 {
        hz_to_angular(self.frequency_hz)
    }

    pub fn gamma_m(&self) -> f64 {
        hz_to_angular(self.gamma_m_hz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermometryConfig {
    pub cavity: CavitySpec,
    /// Probe power and nominal detuning used in the back-action model.
    pub probe: BeamSpec,
    /// rad/s
    pub cool_detuning: f64,
    /// rad/s
    pub delta_lo: f64,
    pub modes: Vec<ModeSpec>,
    /// Bath temperature from the cryostat sensor, K.
    pub t_sensor_k: f64,
    pub correction: CorrectionMethod,
    pub correction_scope: CorrectionScope,
    /// Extra excluded ranges applied to every fit, Hz.
    pub masks: Vec<(f64, f64)>,
    /// Reference line used to calibrate raw homodyne spectra.
    pub calibration_tone: Option<CalibrationTone>,
    pub windows: usize,
    pub window_duration: f64,
}

impl ThermometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_lo > 0.0) {
            return Err(Error::invalid("delta_lo", "must be > 0"));
        }
        if !(self.t_sensor_k > 0.0) {
            return Err(Error::invalid("t_sensor_k", "must be > 0"));
        }
        if !(self.window_duration > 0.0) {
            return Err(Error::invalid("window_duration", "must be > 0"));
        }
        if !physics::is_cooling_detuning(self.cool_detuning) {
            return Err(Error::invalid("cool_detuning", "cooling beam must be red detuned"));
        }
        for m in &self.modes {
            if !(m.frequency_hz > 0.0 && m.gamma_m_hz > 0.0) {
                return Err(Error::invalid("modes", format!("mode `{}` needs positive frequency and width", m.label)));
            }
            let (lo, hi) = m.homodyne_window_hz;
            if !(hi > lo) {
                return Err(Error::invalid("modes", format!("mode `{}` has an empty homodyne window", m.label)));
            }
        }
        for (i, a) in self.modes.iter().enumerate() {
            for b in &self.modes[i + 1..] {
                if a.label == b.label {
                    return Err(Error::invalid("modes", format!("duplicate label `{}`", a.label)));
                }
            }
        }
        let light = self.modes.iter().filter(|m| m.role == ModeRole::Light).count();
        if light != 1 {
            return Err(Error::invalid("modes", format!("need exactly one light mode, found {light}")));
        }
        // auxiliary doublet spans must not overlap each other
        let d = self.delta_lo / std::f64::consts::TAU;
        let aux: Vec<&ModeSpec> = self.auxiliary().collect();
        for (i, a) in aux.iter().enumerate() {
            for b in &aux[i + 1..] {
                let reach = 2.0 * d + a.doublet.half_width + b.doublet.half_width + a.doublet.search + b.doublet.search;
                if (a.frequency_hz - b.frequency_hz).abs() < reach {
                    return Err(Error::invalid(
                        "modes",
                        format!("fit windows of `{}` and `{}` overlap", a.label, b.label),
                    ));
                }
            }
        }
        for &(lo, hi) in &self.masks {
            if !(hi > lo) {
                return Err(Error::invalid("masks", format!("empty range {lo}:{hi}")));
            }
        }
        Ok(())
    }

    /// Analysis settings matching a synthetic scenario, with fit windows
    /// sized from each mode's width at the top cooling power.
    pub fn from_scenario(sc: &SynthScenario) -> Self {
        let d = angular_to_hz(sc.delta_lo);
        let p_max = sc.cool_powers.iter().cloned().fold(0.0, f64::max);
        let modes = sc
            .modes
            .iter()
            .map(|m| {
                let gamma_m_hz = angular_to_hz(m.mode.gamma_m);
                let width = angular_to_hz(m.mode.gamma_m + m.damping_per_watt * p_max);
                let shift = angular_to_hz(m.spring_per_watt * p_max);
                let (doublet, mask) = match (m.role, m.occupancy) {
                    (ModeRole::Light, _) => (
                        DoubletWindow {
                            half_width: d,
                            search: (2.0 * shift).max(500.0),
                        },
                        0.0,
                    ),
                    (_, Occupancy::Fixed(_) | Occupancy::Budget) => (
                        DoubletWindow {
                            half_width: (50.0 * width).clamp(100.0, d),
                            search: (5.0 * width + 2.0 * shift).max(20.0),
                        },
                        (100.0 * width).max(50.0),
                    ),
                };
                let half = (4.0 * width).max(2000.0) + shift;
                ModeSpec {
                    label: m.label.clone(),
                    role: m.role,
                    frequency_hz: angular_to_hz(m.mode.omega_m),
                    gamma_m_hz,
                    g0_hz: angular_to_hz(m.mode.g0),
                    coupling_weight: m.mode.coupling_weight,
                    homodyne_window_hz: (-half, half),
                    doublet,
                    mask_half_width_hz: mask,
                }
            })
            .collect();
        Self {
            cavity: sc.cavity,
            probe: sc.probe,
            cool_detuning: sc.cool_detuning,
            delta_lo: sc.delta_lo,
            modes,
            t_sensor_k: sc.t_bath,
            correction: CorrectionMethod::HeavyTwin,
            correction_scope: CorrectionScope::PerWindow,
            masks: Vec::new(),
            calibration_tone: sc.calibration_tone,
            windows: sc.windows,
            window_duration: sc.window_duration,
        }
    }

    pub fn light(&self) -> Result<&ModeSpec> {
        self.modes
            .iter()
            .find(|m| m.role == ModeRole::Light)
            .ok_or_else(|| Error::invalid("modes", "no light mode configured"))
    }

    pub fn heavy(&self) -> Option<&ModeSpec> {
        self.modes.iter().find(|m| m.role == ModeRole::Heavy)
    }

    pub fn auxiliary(&self) -> impl Iterator<Item = &ModeSpec> {
        self.modes.iter().filter(|m| m.role == ModeRole::Auxiliary)
    }

    pub fn cool_beam(&self, power: f64) -> Result<BeamSpec> {
        BeamSpec::cooling(power, self.cool_detuning)
    }

    /// Back-action occupancies of the light mode at one cooling power.
    pub fn back_action(&self, power: f64) -> Result<(f64, f64)> {
        let light = self.light()?;
        let cool = self.cool_beam(power)?;
        let n_c = physics::n_ba_cool(self.cool_detuning, light.omega_m(), self.cavity.kappa)?;
        let n_p = physics::n_ba_probe(&self.probe, &cool, light.omega_m(), self.cavity.kappa)?;
        Ok((n_c, n_p))
    }

    /// Masks over the lines of every mode except `label`, for one detection kind.
    pub(crate) fn masks_excluding(&self, label: &str, heterodyne: bool) -> Vec<(f64, f64)> {
        let d = self.delta_lo / std::f64::consts::TAU;
        let mut out = self.masks.clone();
        for m in &self.modes {
            if m.label == label || m.mask_half_width_hz <= 0.0 {
                continue;
            }
            let w = m.mask_half_width_hz;
            if heterodyne {
                out.push((m.frequency_hz + d - w, m.frequency_hz + d + w));
                out.push((m.frequency_hz - d - w, m.frequency_hz - d + w));
            } else {
                out.push((m.frequency_hz - w, m.frequency_hz + w));
            }
        }
        out
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Inverse-variance weighted mean and its standard error.
pub(crate) fn weighted_mean(v: &[(f64, f64)]) -> (f64, f64) {
    let (mut sw, mut swx) = (0.0, 0.0);
    for &(x, s) in v {
        let w = 1.0 / (s * s);
        sw += w;
        swx += w * x;
    }
    (swx / sw, 1.0 / sw.sqrt())
}
