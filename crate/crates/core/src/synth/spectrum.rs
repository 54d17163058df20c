//! Power spectra on a uniform frequency grid, and their CSV form.
//!
//! ```text
//! # kind=heterodyne
//! # n_avg=10
//! # window=3
//! # units=raw
//! # duration_s=10
//! frequency_hz,psd
//! 330000,1.25e-3
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionKind {
    Homodyne,
    Heterodyne,
}

impl DetectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::Homodyne => "homodyne",
            DetectionKind::Heterodyne => "heterodyne",
        }
    }
}

impl std::str::FromStr for DetectionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "homodyne" => Ok(DetectionKind::Homodyne),
            "heterodyne" => Ok(DetectionKind::Heterodyne),
            other => Err(format!("unknown detection kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumUnits {
    /// Cavity frequency fluctuations, Hz²/Hz.
    FrequencyNoise,
    /// Detector output in arbitrary units.
    Raw,
}

impl SpectrumUnits {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumUnits::FrequencyNoise => "hz2_per_hz",
            SpectrumUnits::Raw => "raw",
        }
    }
}

impl std::str::FromStr for SpectrumUnits {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hz2_per_hz" => Ok(SpectrumUnits::FrequencyNoise),
            "raw" => Ok(SpectrumUnits::Raw),
            other => Err(format!("unknown units `{other}` (expected hz2_per_hz or raw)")),
        }
    }
}

/// Where a spectrum came from. Everything here is optional in files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub source: String,
    pub step: Option<usize>,
    pub cool_power_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub f_start: f64,
    pub f_step: f64,
    pub values: Vec<f64>,
    pub kind: DetectionKind,
    pub units: SpectrumUnits,
    pub averaging_count: u32,
    pub window_index: usize,
    /// Acquisition time of the window, s.
    pub window_duration: f64,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_start.is_finite() && self.f_step.is_finite() && self.f_step > 0.0) {
            return Err(Error::InvalidSpectrum(format!(
                "grid start {} / step {} (step must be > 0)",
                self.f_start, self.f_step
            )));
        }
        if self.values.len() < 2 {
            return Err(Error::InvalidSpectrum("fewer than 2 samples".into()));
        }
        if self.averaging_count == 0 {
            return Err(Error::InvalidSpectrum("averaging count must be >= 1".into()));
        }
        if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidSpectrum(format!(
                "bin {i} at {} Hz has value {v}; PSD samples must be finite and >= 0",
                self.frequency(i)
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn frequency(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.f_step
    }

    pub fn f_stop(&self) -> f64 {
        self.frequency(self.values.len().saturating_sub(1))
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.frequency(i))
    }

    /// Index range of the bins inside `[f_lo, f_hi]`.
    pub fn index_range(&self, f_lo: f64, f_hi: f64) -> std::ops::Range<usize> {
        let n = self.values.len();
        let lo = ((f_lo - self.f_start) / self.f_step).ceil().max(0.0) as usize;
        let hi = ((f_hi - self.f_start) / self.f_step).floor();
        let hi = if hi < 0.0 { 0 } else { (hi as usize + 1).min(n) };
        lo.min(hi)..hi
    }

    /// Centre time of this window within its acquisition run, s.
    pub fn midpoint_time(&self) -> f64 {
        (self.window_index as f64 + 0.5) * self.window_duration
    }

    pub fn scaled(&self, factor: f64) -> Spectrum {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(32 * self.values.len() + 128);
        let _ = writeln!(s, "# kind={}", self.kind.as_str());
        let _ = writeln!(s, "# n_avg={}", self.averaging_count);
        let _ = writeln!(s, "# window={}", self.window_index);
        let _ = writeln!(s, "# units={}", self.units.as_str());
        let _ = writeln!(s, "# duration_s={}", self.window_duration);
        if let Some(step) = self.meta.step {
            let _ = writeln!(s, "# step={step}");
        }
        if let Some(p) = self.meta.cool_power_w {
            let _ = writeln!(s, "# cool_power_w={p:e}");
        }
        if !self.meta.source.is_empty() {
            let _ = writeln!(s, "# source={}", self.meta.source);
        }
        s.push_str("frequency_hz,psd\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{:e}", self.frequency(i), v);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Spectrum> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&path.display().to_string(), &text)
    }

    pub fn from_csv(origin: &str, text: &str) -> Result<Spectrum> {
        let at = |line: usize| format!("{origin}:{line}");
        let mut kind = None;
        let mut n_avg = None;
        let mut window = None;
        let mut units = None;
        let mut duration = 0.0;
        let mut meta = SpectrumMeta::default();
        let mut freqs = Vec::new();
        let mut values = Vec::new();
        let mut seen_columns = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((key, value)) = rest.trim().split_once('=') else {
                    continue;
                };
                let (key, value) = (key.trim(), value.trim());
                let bad = |e: String| Error::parse(at(line_no), format!("header `{key}`: {e}"));
                match key {
                    "kind" => kind = Some(value.parse::<DetectionKind>().map_err(bad)?),
                    "n_avg" => n_avg = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                    "window" => window = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                    "units" => units = Some(value.parse::<SpectrumUnits>().map_err(bad)?),
                    "duration_s" => duration = value.parse::<f64>().map_err(|e| bad(e.to_string()))?,
                    "step" => meta.step = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                    "cool_power_w" => meta.cool_power_w = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                    "source" => meta.source = value.to_string(),
                    _ => {}
                }
                continue;
            }
            if !seen_columns && line.starts_with("frequency_hz") {
                seen_columns = true;
                continue;
            }
            let (f, v) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(at(line_no), "expected `frequency_hz,psd`"))?;
            let f: f64 = f
                .trim()
                .parse()
                .map_err(|e| Error::parse(at(line_no), format!("frequency: {e}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::parse(at(line_no), format!("psd: {e}")))?;
            if !f.is_finite() {
                return Err(Error::InvalidSpectrum(format!("{}: non-finite frequency", at(line_no))));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSpectrum(format!(
                    "{}: psd value {v} (must be finite and >= 0)",
                    at(line_no)
                )));
            }
            freqs.push((f, line_no));
            values.push(v);
        }

        let missing = |k: &str| Error::parse(origin.to_string(), format!("missing `# {k}=` header"));
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let averaging_count = n_avg.ok_or_else(|| missing("n_avg"))?;
        let window_index = window.ok_or_else(|| missing("window"))?;
        let units = units.ok_or_else(|| missing("units"))?;
        if freqs.len() < 2 {
            return Err(Error::InvalidSpectrum(format!("{origin}: fewer than 2 samples")));
        }
        let f_start = freqs[0].0;
        let n = freqs.len();
        let f_step = (freqs[n - 1].0 - f_start) / (n - 1) as f64;
        if f_step <= 0.0 {
            return Err(Error::InvalidSpectrum(format!("{origin}: frequencies must increase")));
        }
        for (i, &(f, line_no)) in freqs.iter().enumerate() {
            let expected = f_start + i as f64 * f_step;
            if (f - expected).abs() > 1e-6 * f_step {
                return Err(Error::InvalidSpectrum(format!(
                    "{}: non-uniform grid, frequency {f} Hz where {expected} Hz was expected (step {f_step} Hz)",
                    at(line_no)
                )));
            }
        }
        let spectrum = Spectrum {
            f_start,
            f_step,
            values,
            kind,
            units,
            averaging_count,
            window_index,
            window_duration: duration,
            meta,
        };
        spectrum.validate()?;
        Ok(spectrum)
    }
}
