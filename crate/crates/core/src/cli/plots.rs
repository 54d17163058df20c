//! Plot-data tables written next to a report, and read back by `render`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fit::{DoubletFit, LorentzianFit};
use crate::physics;
use crate::synth::Spectrum;
use crate::thermometry::{BathTemperature, HomodyneResult, ThermometryConfig};

use super::report::{DetuningStep, HeterodyneStep};

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| Error::parse(&origin, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(&origin, e.to_string()))?;
            let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            rows.push(row.map_err(|e| Error::parse(format!("{origin}:{}", i + 2), e.to_string()))?);
        }
        Ok(Self { columns, rows })
    }
}

fn bool_f(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Data and fitted model on the bins of `[lo, hi]`.
fn overlay(spectrum: &Spectrum, lo: f64, hi: f64, mask: &[(f64, f64)], model: impl Fn(f64) -> f64) -> Table {
    let mut t = Table::new(&["frequency_hz", "psd", "model", "masked"]);
    for i in spectrum.index_range(lo, hi) {
        let f = spectrum.frequency(i);
        let m = mask.iter().any(|&(a, b)| f >= a && f <= b);
        t.push(vec![f, spectrum.values[i], model(f), bool_f(m)]);
    }
    t
}

pub fn homodyne_fit(spectrum: &Spectrum, fit: &LorentzianFit, window: (f64, f64), mask: &[(f64, f64)]) -> Table {
    overlay(spectrum, window.0, window.1, mask, |f| fit.eval(f))
}

pub fn doublet_fit(spectrum: &Spectrum, fit: &DoubletFit, half_width: f64, mask: &[(f64, f64)]) -> Table {
    let c = fit.mean_center;
    let d = fit.half_splitting;
    overlay(spectrum, c - d - half_width, c + d + half_width, mask, |f| fit.eval(f))
}

/// `A·Γ` points with the three regression curves evaluated at each.
pub fn area_width(result: &HomodyneResult, config: &ThermometryConfig) -> Result<Table> {
    let light = config.light()?;
    let n_th = physics::n_thermal(config.t_sensor_k, light.omega_m())?;
    let mut t = Table::new(&["power_w", "gamma_hz", "area_width", "sigma_area_width", "model", "line", "quadratic"]);
    for s in &result.steps {
        let (n_c, n_p) = config.back_action(s.power_w)?;
        let u = n_th + (n_c + n_p + 0.5) * s.gamma_eff_hz / light.gamma_m_hz;
        let quad = result.quadratic.as_ref().map_or(f64::NAN, |q| q.eval(s.gamma_eff_hz));
        t.push(vec![
            s.power_w,
            s.gamma_eff_hz,
            s.area_width,
            s.sigma_area_width,
            result.scale * u,
            result.line.eval(s.gamma_eff_hz),
            quad,
        ]);
    }
    Ok(t)
}

pub fn heterodyne_windows(steps: &[HeterodyneStep]) -> Table {
    let nan = f64::NAN;
    let mut t = Table::new(&[
        "step",
        "power_w",
        "window",
        "midpoint_s",
        "r_light",
        "correction",
        "r_corrected",
        "n_bar",
        "sigma_n_bar",
        "excluded",
    ]);
    for s in steps {
        let Some(r) = &s.result else { continue };
        for w in &r.windows {
            t.push(vec![
                s.step as f64,
                s.power_w,
                w.window_index as f64,
                w.midpoint_s,
                w.r_light.unwrap_or(nan),
                w.correction.unwrap_or(nan),
                w.r_corrected.unwrap_or(nan),
                w.n_bar.unwrap_or(nan),
                w.sigma_n_bar.unwrap_or(nan),
                bool_f(w.excluded.is_some()),
            ]);
        }
    }
    t
}

/// Measured occupancies with the stacked budget terms; `model` is their sum.
pub fn bath_budget(bath: &BathTemperature) -> Table {
    let mut t = Table::new(&[
        "power_w",
        "gamma_eff_hz",
        "n_bar",
        "sigma_n_bar",
        "n_th_residual",
        "n_ba_cool",
        "n_ba_probe",
        "model",
    ]);
    for (p, b) in bath.points.iter().zip(&bath.budget) {
        t.push(vec![
            p.power_w,
            p.gamma_eff_hz,
            p.n_bar,
            p.sigma_n_bar,
            b.n_th_residual,
            b.n_ba_cool,
            b.n_ba_probe,
            b.n_th_residual + b.n_ba_cool + b.n_ba_probe,
        ]);
    }
    t
}

pub fn detuning_track(steps: &[DetuningStep]) -> Table {
    let mut t = Table::new(&["step", "window", "midpoint_s", "delta_hz", "sigma_hz", "from_track", "track_hz", "track_sigma_hz"]);
    for s in steps {
        let Some(mm) = &s.result else { continue };
        for (i, (&(d, sd), &from)) in mm.delta_hz.iter().zip(&mm.from_track).enumerate() {
            let tm = s.window_midpoints_s.get(i).copied().unwrap_or(f64::NAN);
            let (tr, ts) = mm.track.as_ref().map_or((f64::NAN, f64::NAN), |l| (l.eval(tm), l.eval_sigma(tm)));
            t.push(vec![s.step as f64, i as f64, tm, d, sd, bool_f(from), tr, ts]);
        }
    }
    t
}
