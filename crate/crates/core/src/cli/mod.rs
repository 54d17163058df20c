//! The `optotherm` command line: mode table, synthesis, analysis and rendering.

pub mod plots;
pub mod render;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::parse_range;
use crate::error::{Error, Result};
use crate::physics::membrane::mode_table;
use crate::setup::Setup;
use crate::synth::{cooling_series, DetectionKind, Spectrum, StepTruth};
use crate::thermometry::{
    bath_temperature, correction_multimode, heterodyne_pipeline, homodyne_pipeline, BathOptions, BathPoint,
    CorrectionMethod, ThermometryConfig,
};
use plots::Table;
use report::{digest_bytes, digest_parts, DetuningStep, HeterodyneStep, Invocation, RunReport};

pub const THREADS_VAR: &str = "OPTOTHERM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "optotherm", version, about = "Optomechanical thermometry: synthesize and analyze sideband spectra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of heterodyne windows per step.
    #[arg(long, global = true)]
    pub windows: Option<usize>,
    /// Overrides the configured cavity-filter correction.
    #[arg(long, global = true, value_parser = parse_correction)]
    pub correction: Option<CorrectionMethod>,
    /// Frequency range `f_lo:f_hi` (Hz) excluded from every fit; repeatable.
    #[arg(long = "mask", global = true, value_parser = parse_range)]
    pub masks: Vec<(f64, f64)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the drum-mode table of the configured membrane.
    Modes,
    /// Write synthetic spectra and their ground truth.
    Synth,
    /// Run a thermometry pipeline on spectrum files or directories of them.
    Analyze {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Summarize a report and plot its data as SVG.
    Render { report: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Homodyne,
    Heterodyne,
    Detuning,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Homodyne => "homodyne",
            Kind::Heterodyne => "heterodyne",
            Kind::Detuning => "detuning",
        }
    }

    fn detection(self) -> DetectionKind {
        match self {
            Kind::Homodyne => DetectionKind::Homodyne,
            _ => DetectionKind::Heterodyne,
        }
    }
}

fn parse_correction(s: &str) -> std::result::Result<CorrectionMethod, String> {
    s.parse()
}

/// Caps the global rayon pool from `OPTOTHERM_THREADS`.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid("OPTOTHERM_THREADS", format!("`{v}` is not a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("optotherm: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Modes => cmd_modes(cli),
        Command::Synth => cmd_synth(cli),
        Command::Analyze { kind, inputs } => cmd_analyze(cli, *kind, inputs),
        Command::Render { report } => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| report.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            let (text, _) = render::render(report, &out)?;
            print!("{text}");
            Ok(())
        }
    }
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| Error::parse("command line", format!("`--{flag}` is required")))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_setup(path: &Path) -> Result<(Setup, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::parse(path.display().to_string(), "not UTF-8"))?;
    Ok((Setup::parse(&path.display().to_string(), &text)?, bytes))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn cmd_modes(cli: &Cli) -> Result<()> {
    let (setup, _) = load_setup(require(&cli.config, "config")?)?;
    let membrane = setup
        .membrane
        .as_ref()
        .ok_or_else(|| Error::invalid("f0_hz", "the configuration has no membrane geometry"))?;
    let rows = mode_table(membrane, setup.mode_table.0, setup.mode_table.1)?;
    println!("{:>3} {:>3} {:>10} {:>14} {:>10} {:>10}", "m", "n", "root", "frequency_hz", "weight_cos", "weight_sin");
    for r in &rows {
        let sin = r.weight_sin.map_or_else(|| "-".to_string(), |w| format!("{w:.6}"));
        println!("{:>3} {:>3} {:>10.6} {:>14.1} {:>10.6} {:>10}", r.m, r.n, r.root, r.frequency_hz, r.weight_cos, sin);
    }
    if let Some(out) = &cli.out {
        create_dir(out)?;
        let mut t = Table::new(&["m", "n", "root", "frequency_hz", "weight_cos", "weight_sin"]);
        for r in &rows {
            t.push(vec![r.m as f64, r.n as f64, r.root, r.frequency_hz, r.weight_cos, r.weight_sin.unwrap_or(f64::NAN)]);
        }
        t.write(&out.join("modes.csv"))?;
    }
    Ok(())
}

/// Ground truth written next to synthesized spectra.
#[derive(Debug, Serialize)]
struct TruthSidecar<'a> {
    schema_version: u32,
    config_digest: String,
    seed: u64,
    noise: bool,
    windows: usize,
    window_duration_s: f64,
    steps: &'a [StepTruth],
}

pub fn homodyne_file(step: usize) -> String {
    format!("homodyne_step{step:02}.csv")
}

pub fn heterodyne_file(step: usize, window: usize) -> String {
    format!("heterodyne_step{step:02}_w{window:02}.csv")
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    let out = require(&cli.out, "out")?;
    let (mut setup, bytes) = load_setup(require(&cli.config, "config")?)?;
    let sc = &mut setup.device_mut()?.scenario;
    if let Some(s) = cli.seed {
        sc.rng_seed = s;
    }
    if let Some(w) = cli.windows {
        sc.windows = w;
    }
    let series = cooling_series(sc)?;
    create_dir(out)?;
    for (step, s) in series.iter().enumerate() {
        s.homodyne.write_csv(&out.join(homodyne_file(step)))?;
        for h in &s.heterodyne {
            h.write_csv(&out.join(heterodyne_file(step, h.window_index)))?;
        }
    }
    let truths: Vec<StepTruth> = series.into_iter().map(|s| s.truth).collect();
    write_json(
        &out.join("truth.json"),
        &TruthSidecar {
            schema_version: report::SCHEMA_VERSION,
            config_digest: digest_bytes(&bytes),
            seed: sc.rng_seed,
            noise: sc.noise,
            windows: sc.windows,
            window_duration_s: sc.window_duration,
            steps: &truths,
        },
    )?;
    println!("wrote {} steps × {} windows to {}", truths.len(), sc.windows, out.display());
    Ok(())
}

/// Spectrum files named on the command line, directories expanded to their `.csv` files.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

struct Inputs {
    /// Per step: cooling power and spectra sorted by window index.
    steps: BTreeMap<usize, (f64, Vec<Spectrum>)>,
    digest: String,
    skipped: usize,
}

fn load_inputs(files: &[PathBuf], want: DetectionKind, cool_powers: &[f64], windows: Option<usize>) -> Result<Inputs> {
    let mut parts = Vec::new();
    let mut steps: BTreeMap<usize, (f64, Vec<Spectrum>)> = BTreeMap::new();
    let mut skipped = 0;
    for f in files {
        let bytes = read_bytes(f)?;
        let origin = f.display().to_string();
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::parse(&origin, "not UTF-8"))?;
        let s = Spectrum::from_csv(&origin, text)?;
        let name = f.file_name().map_or_else(|| origin.clone(), |n| n.to_string_lossy().into_owned());
        parts.push((name, bytes));
        if s.kind != want || windows.is_some_and(|w| s.window_index >= w) {
            skipped += 1;
            continue;
        }
        let step = match (s.meta.step, s.meta.cool_power_w) {
            (Some(k), _) => k,
            (None, Some(p)) => cool_powers
                .iter()
                .position(|&c| (c - p).abs() <= 1e-9 * c.abs())
                .ok_or_else(|| Error::parse(&origin, format!("cooling power {p} W is not a configured step")))?,
            (None, None) => 0,
        };
        let power = s
            .meta
            .cool_power_w
            .or_else(|| cool_powers.get(step).copied())
            .ok_or_else(|| Error::parse(&origin, "no `# cool_power_w=` header and no configured power for its step"))?;
        let entry = steps.entry(step).or_insert((power, Vec::new()));
        if (entry.0 - power).abs() > 1e-9 * power.abs() {
            return Err(Error::parse(&origin, format!("step {step} has powers {} W and {power} W", entry.0)));
        }
        if entry.1.iter().any(|o| o.window_index == s.window_index) {
            return Err(Error::parse(&origin, format!("duplicate spectrum for step {step} window {}", s.window_index)));
        }
        entry.1.push(s);
    }
    for (_, v) in steps.values_mut() {
        v.sort_by_key(|s| s.window_index);
    }
    let refs: Vec<(&str, &[u8])> = parts.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
    Ok(Inputs {
        steps,
        digest: digest_parts(&refs),
        skipped,
    })
}

fn fit_plot_name(prefix: &str, step: usize) -> String {
    format!("{prefix}_fit_step{step:02}.csv")
}

struct Analysis<'a> {
    out: &'a Path,
    report: &'a mut RunReport,
}

impl Analysis<'_> {
    fn table(&mut self, name: String, t: &Table) -> Result<()> {
        t.write(&self.out.join(&name))?;
        self.report.plot_data.push(name);
        Ok(())
    }

    fn homodyne(&mut self, inputs: &Inputs, config: &ThermometryConfig) -> Result<()> {
        let mut spectra = Vec::new();
        let mut step_of = Vec::new();
        for (&step, (power, v)) in &inputs.steps {
            if v.len() > 1 {
                return Err(Error::parse(format!("step {step}"), format!("{} homodyne spectra, expected one", v.len())));
            }
            spectra.push((*power, v[0].clone()));
            step_of.push(step);
        }
        let result = homodyne_pipeline(&spectra, config)?;
        let light = config.light()?;
        let window = (
            light.frequency_hz + light.homodyne_window_hz.0,
            light.frequency_hz + light.homodyne_window_hz.1,
        );
        let mask = config.masks_excluding(&light.label, false);
        for s in &result.steps {
            let t = plots::homodyne_fit(&spectra[s.step].1, &s.fit, window, &mask);
            self.table(fit_plot_name("homodyne", step_of[s.step]), &t)?;
        }
        self.table("homodyne_area_width.csv".into(), &plots::area_width(&result, config)?)?;
        for (i, why) in &result.excluded {
            self.report.excluded.push(format!("homodyne step {}: {why}", step_of[*i]));
        }
        self.report.warnings.extend(result.warnings.iter().map(|w| format!("homodyne: {w}")));
        self.report.results.homodyne = Some(result);
        Ok(())
    }

    fn heterodyne(&mut self, inputs: &Inputs, config: &ThermometryConfig) -> Result<()> {
        let light = config.light()?;
        let mask = config.masks_excluding(&light.label, true);
        let mut steps = Vec::new();
        for (&step, (power, windows)) in &inputs.steps {
            match heterodyne_pipeline(windows, config) {
                Ok(r) => {
                    if let Some((w, fit)) = r.windows.iter().find_map(|w| Some((w.window_index, w.light.as_ref()?))) {
                        let spectrum = windows.iter().find(|s| s.window_index == w).expect("window present");
                        let t = plots::doublet_fit(spectrum, fit, light.doublet.half_width, &mask);
                        self.table(fit_plot_name("heterodyne", step), &t)?;
                    }
                    for w in &r.windows {
                        if let Some(why) = &w.excluded {
                            self.report.excluded.push(format!("heterodyne step {step} window {}: {why}", w.window_index));
                        }
                    }
                    self.report.warnings.extend(r.warnings.iter().map(|w| format!("heterodyne step {step}: {w}")));
                    steps.push(HeterodyneStep {
                        step,
                        power_w: *power,
                        result: Some(r),
                        failure: None,
                    });
                }
                Err(e) => steps.push(HeterodyneStep {
                    step,
                    power_w: *power,
                    result: None,
                    failure: Some(e.to_string()),
                }),
            }
        }
        self.table("heterodyne_windows.csv".into(), &plots::heterodyne_windows(&steps))?;
        let points: Vec<BathPoint> = steps
            .iter()
            .filter_map(|s| Some(BathPoint::from_heterodyne(s.power_w, s.result.as_ref()?)))
            .collect();
        let failed = steps.iter().filter(|s| s.result.is_none()).count();
        let total = steps.len();
        self.report.results.heterodyne = steps;
        if points.len() >= 3 {
            match bath_temperature(&points, config, BathOptions::default()) {
                Ok(b) => {
                    self.table("bath_budget.csv".into(), &plots::bath_budget(&b))?;
                    self.report.results.bath = Some(b);
                }
                Err(e) => self.report.warnings.push(format!("bath temperature: {e}")),
            }
        }
        step_failures("heterodyne", failed, total)
    }

    fn detuning(&mut self, inputs: &Inputs, config: &ThermometryConfig) -> Result<()> {
        let mut steps = Vec::new();
        for (&step, (power, windows)) in &inputs.steps {
            let midpoints = windows.iter().map(Spectrum::midpoint_time).collect();
            let (result, failure) = match correction_multimode(windows, config) {
                Ok(m) => {
                    for (w, f) in windows.iter().zip(&m.fits) {
                        if let Err(why) = f {
                            self.report.excluded.push(format!("detuning step {step} window {}: {why}", w.window_index));
                        }
                    }
                    (Some(m), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            steps.push(DetuningStep {
                step,
                power_w: *power,
                window_midpoints_s: midpoints,
                result,
                failure,
            });
        }
        self.table("detuning_track.csv".into(), &plots::detuning_track(&steps))?;
        let failed = steps.iter().filter(|s| s.result.is_none()).count();
        let total = steps.len();
        self.report.results.detuning = steps;
        step_failures("detuning", failed, total)
    }
}

fn step_failures(stage: &'static str, failed: usize, total: usize) -> Result<()> {
    if failed == 0 {
        Ok(())
    } else {
        Err(Error::pipeline(stage, format!("{failed} of {total} steps failed; see their failure fields")))
    }
}

fn cmd_analyze(cli: &Cli, kind: Kind, inputs: &[PathBuf]) -> Result<()> {
    let start = Instant::now();
    let out = require(&cli.out, "out")?;
    let config_path = require(&cli.config, "config")?;
    let invocation = Invocation {
        command: "analyze".into(),
        kind: Some(kind.as_str().into()),
        config: Some(config_path.display().to_string()),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        seed: cli.seed,
        windows: cli.windows,
        correction: cli.correction.map(|c| c.as_str().to_string()),
        masks: cli.masks.clone(),
    };
    let config_bytes = read_bytes(config_path)?;
    create_dir(out)?;
    let mut report = RunReport::new(invocation, digest_bytes(&config_bytes));
    let outcome = analyze_into(cli, kind, inputs, config_path, out, &mut report);
    if let Err(e) = &outcome {
        report.status = if report.results == Default::default() { "failed" } else { "partial" }.into();
        report.failure = Some(e.to_string());
    }
    report.write(&out.join("report.json"))?;
    write_json(
        &out.join("timing.json"),
        &serde_json::json!({
            "duration_s": start.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        }),
    )?;
    match outcome {
        Ok(()) => {
            println!("{} analysis: {}", kind.as_str(), out.join("report.json").display());
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn analyze_into(
    cli: &Cli,
    kind: Kind,
    inputs: &[PathBuf],
    config_path: &Path,
    out: &Path,
    report: &mut RunReport,
) -> Result<()> {
    let (setup, _) = load_setup(config_path)?;
    let device = setup.device()?;
    let mut config = device.analysis.clone();
    if let Some(c) = cli.correction {
        config.correction = c;
    }
    if let Some(w) = cli.windows {
        config.windows = w;
    }
    config.masks.extend(cli.masks.iter().copied());
    config.validate()?;

    let files = expand_inputs(inputs)?;
    let loaded = load_inputs(&files, kind.detection(), &device.scenario.cool_powers, cli.windows)?;
    report.inputs_digest = loaded.digest.clone();
    if loaded.steps.is_empty() {
        return Err(Error::pipeline(
            "inputs",
            format!("no {} spectra among {} files", kind.detection().as_str(), files.len()),
        ));
    }
    if loaded.skipped > 0 {
        report
            .warnings
            .push(format!("{} input files skipped (other detection kind or beyond --windows)", loaded.skipped));
    }
    let mut a = Analysis { out, report };
    match kind {
        Kind::Homodyne => a.homodyne(&loaded, &config),
        Kind::Heterodyne => a.heterodyne(&loaded, &config),
        Kind::Detuning => a.detuning(&loaded, &config),
    }
}
