//! Drum modes of a clamped circular membrane.

use serde::{Deserialize, Serialize};

use super::bessel::{bessel_j, bessel_peak_amplitude, bessel_root};
use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// Which member of a quasi-degenerate pair: angular dependence `cos mθ` or `sin mθ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Twin {
    Cos,
    Sin,
}

impl std::str::FromStr for Twin {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cos" => Ok(Twin::Cos),
            "sin" => Ok(Twin::Sin),
            other => Err(format!("unknown twin `{other}` (expected cos or sin)")),
        }
    }
}

impl std::fmt::Display for Twin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Twin::Cos => "cos",
            Twin::Sin => "sin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub m: u32,
    pub n: u32,
    pub twin: Twin,
}

impl ModeIndex {
    pub fn new(m: u32, n: u32, twin: Twin) -> Result<Self> {
        let idx = Self { m, n, twin };
        idx.validate()?;
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "radial index starts at 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembraneSpec {
    /// Frequency scale `f0` (Hz); mode `(m,n)` sits at `f0 · α_mn`.
    pub f0: f64,
    /// Physical radius (m). Geometry below works in the normalized radius.
    pub radius: f64,
    /// Radial position of the optical spot, normalized to the radius.
    pub spot_r: f64,
    pub spot_theta: f64,
}

impl MembraneSpec {
    pub fn new(f0: f64, radius: f64, spot_r: f64, spot_theta: f64) -> Result<Self> {
        let spec = Self {
            f0,
            radius,
            spot_r,
            spot_theta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("f0", self.f0)?;
        ensure_positive("radius", self.radius)?;
        ensure_finite("spot_theta", self.spot_theta)?;
        check_radius(self.spot_r)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::invalid("r", format!("normalized radius must lie in [0, 1], got {r}")))
    }
}

/// Mode frequency in Hz.
pub fn mode_frequency(membrane: &MembraneSpec, m: u32, n: u32) -> Result<f64> {
    ensure_positive("f0", membrane.f0)?;
    Ok(membrane.f0 * bessel_root(m, n)?)
}

/// Normalized transverse displacement `J_m(α_mn r) · {cos,sin}(mθ)`.
pub fn mode_shape(m: u32, n: u32, twin: Twin, r: f64, theta: f64) -> Result<f64> {
    check_radius(r)?;
    ensure_finite("theta", theta)?;
    let alpha = bessel_root(m, n)?;
    let angular = match twin {
        Twin::Cos => (m as f64 * theta).cos(),
        Twin::Sin => (m as f64 * theta).sin(),
    };
    Ok(bessel_j(m, alpha * r) * angular)
}

/// Coupling of the spot to a mode, `|shape| / max|shape|`, in `[0, 1]`.
pub fn coupling_weight(index: ModeIndex, r: f64, theta: f64) -> Result<f64> {
    index.validate()?;
    let shape = mode_shape(index.m, index.n, index.twin, r, theta)?;
    let peak = bessel_peak_amplitude(index.m)?;
    Ok((shape.abs() / peak).min(1.0))
}

/// One row of the drum-mode table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub m: u32,
    pub n: u32,
    pub root: f64,
    pub frequency_hz: f64,
    pub weight_cos: f64,
    /// `None` for `m = 0`, which has no sine twin.
    pub weight_sin: Option<f64>,
}

/// All modes with `m < m_max`, `n ≤ n_max`, sorted by frequency.
pub fn mode_table(membrane: &MembraneSpec, m_max: u32, n_max: u32) -> Result<Vec<ModeRow>> {
    membrane.validate()?;
    let mut rows = Vec::new();
    for m in 0..m_max {
        for n in 1..=n_max {
            let root = bessel_root(m, n)?;
            let weight_cos = coupling_weight(ModeIndex { m, n, twin: Twin::Cos }, membrane.spot_r, membrane.spot_theta)?;
            let weight_sin = if m == 0 {
                None
            } else {
                Some(coupling_weight(ModeIndex { m, n, twin: Twin::Sin }, membrane.spot_r, membrane.spot_theta)?)
            };
            rows.push(ModeRow {
                m,
                n,
                root,
                frequency_hz: membrane.f0 * root,
                weight_cos,
                weight_sin,
            });
        }
    }
    rows.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    Ok(rows)
}
