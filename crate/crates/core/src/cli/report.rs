//! The JSON run report and its file I/O.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::thermometry::{BathTemperature, HeterodyneResult, HomodyneResult, MultimodeCorrection};

pub const SCHEMA_VERSION: u32 = 1;

/// How the tool was invoked, after flag overrides were applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    pub kind: Option<String>,
    pub config: Option<String>,
    pub inputs: Vec<String>,
    pub seed: Option<u64>,
    pub windows: Option<usize>,
    pub correction: Option<String>,
    pub masks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneStep {
    pub step: usize,
    pub power_w: f64,
    pub result: Option<HeterodyneResult>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningStep {
    pub step: usize,
    pub power_w: f64,
    pub window_midpoints_s: Vec<f64>,
    pub result: Option<MultimodeCorrection>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub homodyne: Option<HomodyneResult>,
    pub heterodyne: Vec<HeterodyneStep>,
    pub bath: Option<BathTemperature>,
    pub detuning: Vec<DetuningStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    /// `sha256:` of the configuration file bytes.
    pub config_digest: String,
    /// `sha256:` over the input file names and bytes, in reading order.
    pub inputs_digest: String,
    /// `ok`, or `failed` with `failure` set.
    pub status: String,
    pub failure: Option<String>,
    /// Unit of each quantity kind; result field names carry a matching suffix.
    pub units: BTreeMap<String, String>,
    pub results: Results,
    /// Plot-data files written next to the report, relative names.
    pub plot_data: Vec<String>,
    pub warnings: Vec<String>,
    pub excluded: Vec<String>,
    /// Wall-clock seconds. Left out of the files the tool writes so that
    /// reruns stay byte-identical; see `timing.json`.
    pub duration_s: Option<f64>,
}

impl RunReport {
    pub fn new(invocation: Invocation, config_digest: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            config_digest,
            inputs_digest: digest_parts(&[]),
            status: "ok".into(),
            failure: None,
            units: default_units(),
            results: Results::default(),
            plot_data: Vec::new(),
            warnings: Vec::new(),
            excluded: Vec::new(),
            duration_s: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        // NaN would come back as null and break the round trip
        let back: RunReport = serde_json::from_str(&s)
            .map_err(|e| Error::pipeline("report", format!("report does not parse back ({e}); a result is not finite")))?;
        if back != *self {
            return Err(Error::pipeline("report", "report does not round-trip"));
        }
        Ok(s)
    }

    pub fn from_json(origin: &str, text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| Error::parse(origin, format!("malformed report: {e}")))?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::parse(
                origin,
                format!("schema_version {} (this tool reads {SCHEMA_VERSION})", r.schema_version),
            ));
        }
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn default_units() -> BTreeMap<String, String> {
    [
        ("frequency (_hz)", "Hz"),
        ("linewidth (gamma_*)", "Hz"),
        ("power (_w)", "W"),
        ("temperature (_k)", "K"),
        ("time (_s)", "s"),
        ("area_width", "Hz^3"),
        ("homodyne area", "Hz^2"),
        ("heterodyne area", "arbitrary"),
        ("occupancy (n_*)", "phonons"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Digest of named byte strings; names are length-prefixed so parts cannot run together.
pub fn digest_parts(parts: &[(&str, &[u8])]) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in parts {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex(&h.finalize())
}

fn hex(d: &[u8]) -> String {
    let mut s = String::from("sha256:");
    for b in d {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
