//! Closed-form optomechanics relations and membrane drum-mode geometry.
//!
//! All frequencies are angular (rad/s); conversion to Hz happens only at the
//! file and report boundaries.

pub mod bessel;
pub mod constants;
pub mod membrane;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use constants::{HBAR, K_B};

pub use bessel::{bessel_j, bessel_root};
pub use membrane::{coupling_weight, mode_frequency, mode_shape, MembraneSpec, ModeIndex, Twin};

/// Optical cavity; `kappa` is the full linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    pub kappa: f64,
}

impl CavitySpec {
    pub fn new(kappa: f64) -> Result<Self> {
        ensure_positive("kappa", kappa)?;
        Ok(Self { kappa })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamRole {
    Probe,
    Cooling,
}

/// A laser beam sent into the cavity. `detuning` is signed, relative to the
/// cavity resonance; negative is red.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub power: f64,
    pub detuning: f64,
    pub role: BeamRole,
}

impl BeamSpec {
    pub fn new(power: f64, detuning: f64, role: BeamRole) -> Result<Self> {
        ensure_non_negative("power", power)?;
        ensure_finite("detuning", detuning)?;
        Ok(Self {
            power,
            detuning,
            role,
        })
    }

    pub fn probe(power: f64, detuning: f64) -> Result<Self> {
        Self::new(power, detuning, BeamRole::Probe)
    }

    pub fn cooling(power: f64, detuning: f64) -> Result<Self> {
        Self::new(power, detuning, BeamRole::Cooling)
    }
}

/// One mechanical mode of the membrane.
///
/// `g0` is the vacuum coupling at an antinode of the mode; the coupling seen
/// by the cavity spot is `coupling_weight * g0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub indices: ModeIndex,
    pub omega_m: f64,
    pub gamma_m: f64,
    pub q_factor: f64,
    pub g0: f64,
    pub coupling_weight: f64,
}

impl MechanicalMode {
    /// Builds a mode from its frequency and quality factor; `gamma_m = omega_m / Q`.
    pub fn from_q(indices: ModeIndex, omega_m: f64, q_factor: f64, g0: f64, coupling_weight: f64) -> Result<Self> {
        ensure_positive("q_factor", q_factor)?;
        let mode = Self {
            indices,
            omega_m,
            gamma_m: omega_m / q_factor,
            q_factor,
            g0,
            coupling_weight,
        };
        mode.validate()?;
        Ok(mode)
    }

    /// Builds a mode from its frequency and intrinsic linewidth; `Q = omega_m / gamma_m`.
    pub fn from_width(indices: ModeIndex, omega_m: f64, gamma_m: f64, g0: f64, coupling_weight: f64) -> Result<Self> {
        ensure_positive("gamma_m", gamma_m)?;
        let mode = Self {
            indices,
            omega_m,
            gamma_m,
            q_factor: omega_m / gamma_m,
            g0,
            coupling_weight,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        self.indices.validate()?;
        ensure_positive("omega_m", self.omega_m)?;
        ensure_positive("gamma_m", self.gamma_m)?;
        ensure_positive("q_factor", self.q_factor)?;
        ensure_non_negative("g0", self.g0)?;
        let q = self.omega_m / self.gamma_m;
        if ((q - self.q_factor) / self.q_factor).abs() > 1e-9 {
            return Err(Error::invalid(
                "q_factor",
                format!("inconsistent with omega_m/gamma_m = {q}"),
            ));
        }
        if !(0.0..=1.0).contains(&self.coupling_weight) {
            return Err(Error::invalid(
                "coupling_weight",
                format!("must lie in [0, 1], got {}", self.coupling_weight),
            ));
        }
        Ok(())
    }

    /// Vacuum coupling at the cavity spot.
    pub fn effective_g0(&self) -> f64 {
        self.g0 * self.coupling_weight
    }
}

/// Decomposition of the mean phonon number into thermal and back-action parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationBudget {
    pub n_th_residual: f64,
    pub n_ba_cool: f64,
    pub n_ba_probe: f64,
    pub n_total: f64,
}

/// Cavity response `L(ω) = 1 / ((κ/2)² + ω²)`.
pub fn lorentzian_response(omega: f64, kappa: f64) -> Result<f64> {
    ensure_positive("kappa", kappa)?;
    ensure_finite("omega", omega)?;
    Ok(lorentzian_unchecked(omega, kappa))
}

#[inline]
pub(crate) fn lorentzian_unchecked(omega: f64, kappa: f64) -> f64 {
    let half = 0.5 * kappa;
    1.0 / (half * half + omega * omega)
}

/// High-temperature thermal occupancy `k_B T / ħΩ`.
pub fn n_thermal(t_bath: f64, omega_m: f64) -> Result<f64> {
    ensure_positive("t_bath", t_bath)?;
    ensure_positive("omega_m", omega_m)?;
    Ok(K_B * t_bath / (HBAR * omega_m))
}

/// Bath temperature that produces the given high-temperature occupancy.
pub fn temperature_from_occupancy(n_th: f64, omega_m: f64) -> Result<f64> {
    ensure_non_negative("n_th", n_th)?;
    ensure_positive("omega_m", omega_m)?;
    Ok(n_th * HBAR * omega_m / K_B)
}

/// Zero-point amplitude `sqrt(ħ / (2 m_eff Ω))`.
pub fn x_zpf(m_eff: f64, omega_m: f64) -> Result<f64> {
    ensure_positive("m_eff", m_eff)?;
    ensure_positive("omega_m", omega_m)?;
    Ok((HBAR / (2.0 * m_eff * omega_m)).sqrt())
}

/// Displacement variance of the mode, `2 x_zpf² (1/2 + n̄)`.
pub fn displacement_variance(x_zpf: f64, n_bar: f64) -> Result<f64> {
    ensure_positive("x_zpf", x_zpf)?;
    ensure_non_negative("n_bar", n_bar)?;
    Ok(2.0 * x_zpf * x_zpf * (0.5 + n_bar))
}

/// Residual occupancy set by the cooling beam's quantum back-action,
/// `[L(Δ+Ω)/L(Δ−Ω) − 1]⁻¹`.
///
/// A blue-detuned beam gives a negative value, which is returned unchanged;
/// callers that model cooling reject `delta_cool >= 0`.
pub fn n_ba_cool(delta_cool: f64, omega_m: f64, kappa: f64) -> Result<f64> {
    ensure_finite("delta_cool", delta_cool)?;
    ensure_positive("omega_m", omega_m)?;
    ensure_positive("kappa", kappa)?;
    if delta_cool == 0.0 {
        return Err(Error::Divergence(
            "n_ba_cool: resonant beam makes L(Δ+Ω) = L(Δ−Ω)".into(),
        ));
    }
    let ratio = lorentzian_unchecked(delta_cool + omega_m, kappa) / lorentzian_unchecked(delta_cool - omega_m, kappa);
    let denom = ratio - 1.0;
    if denom == 0.0 {
        return Err(Error::Divergence(format!(
            "n_ba_cool: filter ratio rounds to 1 at Δ = {delta_cool}"
        )));
    }
    Ok(1.0 / denom)
}

/// True when `delta_cool` is on the red side, where `n_ba_cool` is positive.
pub fn is_cooling_detuning(delta_cool: f64) -> bool {
    delta_cool < 0.0
}

/// Occupancy added by the probe beam, scaled from the cooling-beam term by
/// the ratio of powers and of the intracavity quantum-noise factors.
pub fn n_ba_probe(probe: &BeamSpec, cool: &BeamSpec, omega_m: f64, kappa: f64) -> Result<f64> {
    ensure_positive("cool.power", cool.power)?;
    ensure_non_negative("probe.power", probe.power)?;
    let base = n_ba_cool(cool.detuning, omega_m, kappa)?;
    let l = |w: f64| lorentzian_unchecked(w, kappa);
    let noise = |d: f64| l(d) * (l(d + omega_m) + l(d - omega_m));
    Ok(base * (probe.power / cool.power) * noise(probe.detuning) / noise(cool.detuning))
}

fn check_widths(gamma_m: f64, gamma_eff: f64) -> Result<()> {
    ensure_positive("gamma_m", gamma_m)?;
    ensure_finite("gamma_eff", gamma_eff)?;
    if gamma_eff < gamma_m {
        return Err(Error::invalid(
            "gamma_eff",
            format!("anti-damping (gamma_eff = {gamma_eff} < gamma_m = {gamma_m}) is not modeled"),
        ));
    }
    Ok(())
}

/// Total occupancy with the thermal part reduced by the cooling factor.
pub fn n_total(n_th: f64, gamma_m: f64, gamma_eff: f64, n_ba_cool: f64, n_ba_probe: f64) -> Result<OccupationBudget> {
    check_widths(gamma_m, gamma_eff)?;
    ensure_non_negative("n_th", n_th)?;
    ensure_non_negative("n_ba_cool", n_ba_cool)?;
    ensure_non_negative("n_ba_probe", n_ba_probe)?;
    let n_th_residual = n_th * (gamma_m / gamma_eff);
    Ok(OccupationBudget {
        n_th_residual,
        n_ba_cool,
        n_ba_probe,
        n_total: n_th_residual + n_ba_cool + n_ba_probe,
    })
}

/// Area×width product of the peak in the cavity-frequency-fluctuation
/// spectrum, `2 g0² Γm [n_th + (n_ba_cool + n_ba_probe + 1/2) Γeff/Γm]`.
/// Units follow the inputs: rad/s in gives (rad/s)³ out.
pub fn area_width_product(
    g0: f64,
    gamma_m: f64,
    gamma_eff: f64,
    n_th: f64,
    n_ba_cool: f64,
    n_ba_probe: f64,
) -> Result<f64> {
    check_widths(gamma_m, gamma_eff)?;
    ensure_non_negative("g0", g0)?;
    ensure_non_negative("n_th", n_th)?;
    ensure_non_negative("n_ba_cool", n_ba_cool)?;
    ensure_non_negative("n_ba_probe", n_ba_probe)?;
    Ok(2.0 * g0 * g0 * gamma_m * (n_th + (n_ba_cool + n_ba_probe + 0.5) * gamma_eff / gamma_m))
}

/// Stokes-to-anti-Stokes ratio `(n̄+1)/n̄` of a resonantly probed mode.
pub fn sideband_ratio_from_n(n: f64) -> Result<f64> {
    ensure_positive("n", n)?;
    Ok((n + 1.0) / n)
}

/// Occupancy from a sideband ratio, `1/(R−1)`.
pub fn n_from_ratio(r: f64) -> Result<f64> {
    if !r.is_finite() || r <= 1.0 {
        return Err(Error::NonPhysicalRatio(r));
    }
    Ok(1.0 / (r - 1.0))
}

/// Stokes-over-anti-Stokes gain of the cavity for a probe at `delta_probe`,
/// `L(Δ−Ω)/L(Δ+Ω)`.
pub fn cavity_filter_ratio(delta_probe: f64, omega_m: f64, kappa: f64) -> Result<f64> {
    ensure_positive("kappa", kappa)?;
    ensure_finite("delta_probe", delta_probe)?;
    ensure_finite("omega_m", omega_m)?;
    Ok(cavity_filter_ratio_unchecked(delta_probe, omega_m, kappa))
}

#[inline]
pub(crate) fn cavity_filter_ratio_unchecked(delta_probe: f64, omega_m: f64, kappa: f64) -> f64 {
    let h2 = 0.25 * kappa * kappa;
    let plus = delta_probe + omega_m;
    let minus = delta_probe - omega_m;
    (h2 + plus * plus) / (h2 + minus * minus)
}

/// Derivative of [`cavity_filter_ratio`] with respect to the detuning.
pub(crate) fn cavity_filter_ratio_derivative(delta_probe: f64, omega_m: f64, kappa: f64) -> f64 {
    let h2 = 0.25 * kappa * kappa;
    let plus = delta_probe + omega_m;
    let minus = delta_probe - omega_m;
    let num = h2 + plus * plus;
    let den = h2 + minus * minus;
    (2.0 * plus * den - 2.0 * minus * num) / (den * den)
}
