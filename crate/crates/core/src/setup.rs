//! One configuration file describing the device, the synthetic run and the analysis.
//!
//! Global keys (units in the key name; `*` marks required):
//!
//! ```text
//! kappa_hz*            cavity linewidth
//! delta_lo_hz*         local-oscillator offset
//! probe_power_w*       probe power
//! probe_detuning_hz    drift polynomial c0, c1, c2 (Hz, Hz/s, Hz/s²), default 0
//! cool_detuning_hz*    cooling-beam detuning (negative: red)
//! cool_powers_w*       comma list, one power step each
//! t_bath_k*            bath temperature
//! t_sensor_k           sensor reading used by the analysis, default t_bath_k
//! heating_k_per_w      bath heating slope, default 0
//! extra_noise_fraction share of A at top power from excess noise, default 0
//! f_start_hz, f_stop_hz, bins      spectral grid, default 330e3, 410e3, 32768
//! averaging_count      periodograms per spectrum, default 10
//! windows              heterodyne windows per step, default 10
//! window_duration_s    default 10
//! seed, noise          RNG seed (default 0) and noise switch (default true)
//! homodyne_floor, heterodyne_floor     offset:slope, default 0:0
//! homodyne_spurious, heterodyne_spurious   f:height:width, ...
//! calibration_tone     f:area
//! heterodyne_gain      default 1
//! correction           heavy-twin | multimode
//! correction_scope     per-window | per-run
//! masks                lo:hi, ... excluded from every fit
//! f0_hz, membrane_radius_m, spot_r, spot_theta_rad   membrane geometry
//! mode_table_m, mode_table_n   extent of the `modes` table, default 4, 3
//! ```
//!
//! Each `[mode.<label>]` section takes `role*` (light, heavy, aux), `m`, `n`,
//! `twin`, `frequency_hz` (else from the membrane), `q` or `gamma_hz`,
//! `g0_hz*`, `weight` (else from the spot), `damping_hz_per_w`,
//! `spring_hz_per_w`, `n_bar` (fixed occupancy; omitted means the thermal
//! budget), and the analysis overrides `homodyne_window_hz` (lo:hi relative
//! to the mode), `half_window_hz`, `search_hz`, `mask_half_width_hz`.

use std::path::Path;

use crate::config::{ConfigDoc, Table};
use crate::error::{Error, Result};
use crate::physics::constants::hz_to_angular;
use crate::physics::{coupling_weight, mode_frequency, BeamSpec, CavitySpec, MechanicalMode, MembraneSpec, ModeIndex, Twin};
use crate::synth::{CalibrationTone, DetuningDrift, Grid, LinearFloor, ModeRole, Occupancy, ScenarioMode, SpuriousPeak, SynthScenario};
use crate::thermometry::{CorrectionMethod, CorrectionScope, ThermometryConfig};

#[derive(Debug, Clone)]
pub struct Setup {
    pub membrane: Option<MembraneSpec>,
    /// Extent (m < m_max, n ≤ n_max) of the mode table.
    pub mode_table: (u32, u32),
    pub device: Option<Device>,
}

/// Everything beyond the membrane: the synthetic run and its analysis.
#[derive(Debug, Clone)]
pub struct Device {
    pub scenario: SynthScenario,
    pub analysis: ThermometryConfig,
}

struct Overrides {
    homodyne_window: Option<(f64, f64)>,
    half_window: Option<f64>,
    search: Option<f64>,
    mask: Option<f64>,
}

impl Setup {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(origin: &str, text: &str) -> Result<Self> {
        let mut doc = ConfigDoc::parse(origin, text)?;
        let g = &mut doc.global;
        let membrane = match g.take_f64("f0_hz")? {
            Some(f0) => Some(MembraneSpec::new(
                f0,
                g.take_f64("membrane_radius_m")?.unwrap_or(1.0),
                g.take_f64("spot_r")?.unwrap_or(0.0),
                g.take_f64("spot_theta_rad")?.unwrap_or(0.0),
            )?),
            None => {
                for k in ["membrane_radius_m", "spot_r", "spot_theta_rad"] {
                    if g.contains(k) {
                        return Err(Error::parse(origin, format!("`{k}` needs `f0_hz`")));
                    }
                }
                None
            }
        };
        let mode_table = (
            g.take_parsed::<u32>("mode_table_m")?.unwrap_or(4),
            g.take_parsed::<u32>("mode_table_n")?.unwrap_or(3),
        );
        if !g.contains("kappa_hz") && doc.sections.is_empty() {
            // geometry-only file, enough for the mode table
            let membrane = membrane.ok_or_else(|| Error::parse(origin, "missing required key `kappa_hz`"))?;
            doc.finish()?;
            return Ok(Self {
                membrane: Some(membrane),
                mode_table,
                device: None,
            });
        }
        let kappa = hz_to_angular(g.require_f64("kappa_hz")?);
        let delta_lo = hz_to_angular(g.require_f64("delta_lo_hz")?);
        let probe_power = g.require_f64("probe_power_w")?;
        let drift_hz = g.take_f64_list("probe_detuning_hz")?.unwrap_or_else(|| vec![0.0]);
        if drift_hz.is_empty() || drift_hz.len() > 3 {
            return Err(Error::parse(origin, "`probe_detuning_hz` takes 1 to 3 coefficients"));
        }
        let drift = DetuningDrift {
            coefficients: drift_hz.iter().map(|&c| hz_to_angular(c)).collect(),
        };
        let cool_detuning = hz_to_angular(g.require_f64("cool_detuning_hz")?);
        let cool_powers = g
            .take_f64_list("cool_powers_w")?
            .ok_or_else(|| Error::parse(origin, "missing required key `cool_powers_w`"))?;
        let t_bath = g.require_f64("t_bath_k")?;
        let t_sensor = g.take_f64("t_sensor_k")?.unwrap_or(t_bath);
        let heating = g.take_f64("heating_k_per_w")?.unwrap_or(0.0);
        let extra = g.take_f64("extra_noise_fraction")?.unwrap_or(0.0);
        let grid = Grid::spanning(
            g.take_f64("f_start_hz")?.unwrap_or(330e3),
            g.take_f64("f_stop_hz")?.unwrap_or(410e3),
            g.take_parsed::<usize>("bins")?.unwrap_or(32768),
        )?;
        let averaging_count = g.take_parsed::<u32>("averaging_count")?.unwrap_or(10);
        let windows = g.take_parsed::<usize>("windows")?.unwrap_or(10);
        let window_duration = g.take_f64("window_duration_s")?.unwrap_or(10.0);
        let rng_seed = g.take_parsed::<u64>("seed")?.unwrap_or(0);
        let noise = g.take_bool("noise")?.unwrap_or(true);
        let floor = |g: &mut Table, key: &str| -> Result<LinearFloor> {
            Ok(match g.take_tuples(key, 2)?.as_slice() {
                [] => LinearFloor::default(),
                [v] => LinearFloor { offset: v[0], slope: v[1] },
                _ => return Err(Error::parse(origin, format!("`{key}` takes one offset:slope pair"))),
            })
        };
        let homodyne_floor = floor(g, "homodyne_floor")?;
        let heterodyne_floor = floor(g, "heterodyne_floor")?;
        let spurious = |g: &mut Table, key: &str| -> Result<Vec<SpuriousPeak>> {
            Ok(g.take_tuples(key, 3)?
                .into_iter()
                .map(|v| SpuriousPeak {
                    frequency_hz: v[0],
                    height: v[1],
                    width_hz: v[2],
                })
                .collect())
        };
        let homodyne_spurious = spurious(g, "homodyne_spurious")?;
        let heterodyne_spurious = spurious(g, "heterodyne_spurious")?;
        let calibration_tone = match g.take_tuples("calibration_tone", 2)?.as_slice() {
            [] => None,
            [v] => Some(CalibrationTone {
                frequency_hz: v[0],
                area: v[1],
            }),
            _ => return Err(Error::parse(origin, "`calibration_tone` takes one f:area pair")),
        };
        let heterodyne_gain = g.take_f64("heterodyne_gain")?.unwrap_or(1.0);
        let correction = g
            .take_parsed::<CorrectionMethod>("correction")?
            .unwrap_or(CorrectionMethod::HeavyTwin);
        let correction_scope = g.take_parsed::<CorrectionScope>("correction_scope")?.unwrap_or_default();
        let masks = g.take_ranges("masks")?;

        let mut modes = Vec::new();
        let mut overrides = Vec::new();
        for sec in &mut doc.sections {
            if sec.kind != "mode" {
                return Err(Error::parse(
                    format!("{origin}:{}", header_line(text, &sec.kind, &sec.label)),
                    format!("unknown section kind `{}`", sec.kind),
                ));
            }
            let (mode, ov) = parse_mode(&sec.label, &mut sec.table, membrane.as_ref(), origin)?;
            modes.push(mode);
            overrides.push(ov);
        }
        doc.finish()?;

        let scenario = SynthScenario {
            cavity: CavitySpec::new(kappa)?,
            probe: BeamSpec::probe(probe_power, drift.coefficients[0])?,
            drift,
            cool_detuning,
            cool_powers,
            delta_lo,
            modes,
            t_bath,
            heating_per_watt: heating,
            extra_noise_fraction: extra,
            grid,
            homodyne_floor,
            heterodyne_floor,
            homodyne_spurious,
            heterodyne_spurious,
            calibration_tone,
            heterodyne_gain,
            averaging_count,
            windows,
            window_duration,
            rng_seed,
            noise,
        };
        scenario.validate()?;
        let mut analysis = ThermometryConfig::from_scenario(&scenario);
        analysis.t_sensor_k = t_sensor;
        analysis.correction = correction;
        analysis.correction_scope = correction_scope;
        analysis.masks = masks;
        for (m, ov) in analysis.modes.iter_mut().zip(overrides) {
            if let Some(w) = ov.homodyne_window {
                m.homodyne_window_hz = w;
            }
            if let Some(h) = ov.half_window {
                m.doublet.half_width = h;
            }
            if let Some(s) = ov.search {
                m.doublet.search = s;
            }
            if let Some(k) = ov.mask {
                m.mask_half_width_hz = k;
            }
        }
        analysis.validate()?;
        Ok(Self {
            membrane,
            mode_table,
            device: Some(Device { scenario, analysis }),
        })
    }

    pub fn device(&self) -> Result<&Device> {
        self.device
            .as_ref()
            .ok_or_else(|| Error::invalid("config", "describes only the membrane; device keys and modes are missing"))
    }

    pub fn device_mut(&mut self) -> Result<&mut Device> {
        self.device
            .as_mut()
            .ok_or_else(|| Error::invalid("config", "describes only the membrane; device keys and modes are missing"))
    }
}

fn header_line(text: &str, kind: &str, label: &str) -> usize {
    let want = format!("[{kind}.{label}]");
    text.lines()
        .position(|l| l.trim().replace(' ', "") == want)
        .map_or(0, |i| i + 1)
}

fn parse_mode(label: &str, t: &mut Table, membrane: Option<&MembraneSpec>, origin: &str) -> Result<(ScenarioMode, Overrides)> {
    let ctx = |msg: String| Error::parse(origin, format!("[mode.{label}]: {msg}"));
    let role: ModeRole = t.require_parsed("role")?;
    let m = t.take_parsed::<u32>("m")?.unwrap_or(1);
    let n = t.take_parsed::<u32>("n")?.unwrap_or(1);
    let default_twin = if role == ModeRole::Heavy { Twin::Sin } else { Twin::Cos };
    let twin = t.take_parsed::<Twin>("twin")?.unwrap_or(default_twin);
    let index = ModeIndex::new(m, n, twin)?;
    let frequency_hz = match (t.take_f64("frequency_hz")?, membrane) {
        (Some(f), _) => f,
        (None, Some(mem)) => mode_frequency(mem, m, n)?,
        (None, None) => return Err(ctx("needs `frequency_hz` or a membrane `f0_hz`".into())),
    };
    let weight = match (t.take_f64("weight")?, membrane) {
        (Some(w), _) => w,
        (None, Some(mem)) => coupling_weight(index, mem.spot_r, mem.spot_theta)?,
        (None, None) => 1.0,
    };
    let g0 = hz_to_angular(t.require_f64("g0_hz")?);
    let omega = hz_to_angular(frequency_hz);
    let mode = match (t.take_f64("q")?, t.take_f64("gamma_hz")?) {
        (Some(q), None) => MechanicalMode::from_q(index, omega, q, g0, weight)?,
        (None, Some(gm)) => MechanicalMode::from_width(index, omega, hz_to_angular(gm), g0, weight)?,
        _ => return Err(ctx("give exactly one of `q` and `gamma_hz`".into())),
    };
    let occupancy = match t.take_f64("n_bar")? {
        Some(nb) => Occupancy::Fixed(nb),
        None => Occupancy::Budget,
    };
    let ov = Overrides {
        homodyne_window: t.take_range("homodyne_window_hz")?,
        half_window: t.take_f64("half_window_hz")?,
        search: t.take_f64("search_hz")?,
        mask: t.take_f64("mask_half_width_hz")?,
    };
    Ok((
        ScenarioMode {
            label: label.to_string(),
            role,
            mode,
            occupancy,
            damping_per_watt: hz_to_angular(t.take_f64("damping_hz_per_w")?.unwrap_or(0.0)),
            spring_per_watt: hz_to_angular(t.take_f64("spring_hz_per_w")?.unwrap_or(0.0)),
        },
        ov,
    ))
}
