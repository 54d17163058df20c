use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use optotherm::cli::plots::Table;
use optotherm::cli::report::RunReport;
use optotherm::setup::Setup;
use serde_json::Value;

const BASE: &str = "
f0_hz = 96.6e3
spot_r = 0.35
spot_theta_rad = 0.005
kappa_hz = 1.4e6
delta_lo_hz = 9e3
probe_power_w = 18e-6
cool_detuning_hz = -700e3
t_bath_k = 7.0
averaging_count = 10
window_duration_s = 10
homodyne_floor = 0.02:0
heterodyne_floor = 1e-4:0
";

const WIDE: &str = "f_start_hz = 220e3\nf_stop_hz = 690e3\nbins = 47001\ncorrection = multimode\n";

const LIGHT: &str = "
[mode.light]
role = light
q = 8.9e6
g0_hz = 31
weight = 1
damping_hz_per_w = 9.62e7
spring_hz_per_w = 2e7
";

fn aux() -> String {
    [(0, 1), (2, 1), (0, 2)]
        .iter()
        .map(|(m, n)| {
            format!(
                "\n[mode.aux{m}{n}]\nrole = aux\nm = {m}\nn = {n}\ngamma_hz = 1000\ng0_hz = 31\nweight = 1e-3\nn_bar = 1e6\n\
                 mask_half_width_hz = 4e3\nhalf_window_hz = 5e3\nsearch_hz = 1e3\n"
            )
        })
        .collect()
}

fn config(dir: &Path, globals: &str, light_extra: &str) -> PathBuf {
    let p = dir.join("run.conf");
    std::fs::write(&p, format!("{BASE}{WIDE}{globals}\n{LIGHT}{light_extra}\n{}", aux())).unwrap();
    p
}

fn cli(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optotherm"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(dir: &Path, conf: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&cli(&[&"synth", &"--config", &conf, &"--out", &out]));
    out
}

fn analyze(kind: &str, conf: &Path, inputs: &Path, out: &Path) -> Output {
    cli(&[&"analyze", &"--kind", &kind, &"--config", &conf, &"--out", &out, &inputs])
}

#[test]
fn synth_writes_one_file_per_spectrum_and_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "cool_powers_w = 20e-6, 30e-6, 40e-6, 50e-6, 60e-6\nseed = 3", "");
    let out = synth(dir.path(), &conf, "a");
    let names = files(&out);
    assert_eq!(names.iter().filter(|n| n.starts_with("homodyne_")).count(), 5);
    assert_eq!(names.iter().filter(|n| n.starts_with("heterodyne_")).count(), 50);
    assert_eq!(names.iter().filter(|n| n.ends_with(".json")).count(), 1);
    assert_eq!(names.len(), 56);

    let again = synth(dir.path(), &conf, "b");
    for n in &names {
        assert_eq!(std::fs::read(out.join(n)).unwrap(), std::fs::read(again.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn sidecar_matches_the_scenario_physics() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "cool_powers_w = 10e-6, 60e-6\nwindows = 2\nprobe_detuning_hz = 1e3, 20", "");
    let out = synth(dir.path(), &conf, "s");
    let truth = read_json(&out.join("truth.json"));
    let setup = Setup::from_file(&conf).unwrap();
    let sc = &setup.device().unwrap().scenario;
    for (k, step) in truth["steps"].as_array().unwrap().iter().enumerate() {
        let t = sc.step_truth(k).unwrap();
        let light = step["modes"].as_array().unwrap().iter().find(|m| m["label"] == "light").unwrap();
        let want = t.mode("light").unwrap();
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        assert!(rel(light["n_bar"].as_f64().unwrap(), want.n_bar) < 1e-12);
        assert!(rel(light["gamma_eff_hz"].as_f64().unwrap(), want.gamma_eff_hz) < 1e-12);
        let d: Vec<f64> = step["probe_detuning_hz"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(d.len(), 2);
        assert!((d[0] - 1100.0).abs() < 1e-9 && (d[1] - 1300.0).abs() < 1e-9, "{d:?}");
    }
}

#[test]
fn heterodyne_report_matches_truth_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "cool_powers_w = 60e-6\nseed = 5", "n_bar = 3.87\n");
    let syn = synth(dir.path(), &conf, "s");
    let out = dir.path().join("het");
    ok(&analyze("heterodyne", &conf, &syn, &out));

    let path = out.join("report.json");
    let bytes = std::fs::read_to_string(&path).unwrap();
    let report = RunReport::from_json("report", &bytes).unwrap();
    assert_eq!(report.to_json().unwrap(), bytes);
    assert_eq!(report.status, "ok");
    assert_eq!(report.schema_version, 1);
    assert!(report.config_digest.starts_with("sha256:"));

    let r = report.results.heterodyne[0].result.as_ref().unwrap();
    let tol = 3.0 * r.n_bar_std / (r.accepted as f64).sqrt();
    assert!((r.n_bar_mean - 3.87).abs() < tol, "{} ± {tol}", r.n_bar_mean);
    for name in &report.plot_data {
        assert!(out.join(name).exists(), "{name}");
    }
    assert!(out.join("timing.json").exists());
    assert!(report.duration_s.is_none());
}

#[test]
fn detuning_track_of_a_resonant_probe_is_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "cool_powers_w = 60e-6\nnoise = false", "");
    let syn = synth(dir.path(), &conf, "s");
    let out = dir.path().join("det");
    ok(&analyze("detuning", &conf, &syn, &out));
    let t = Table::read(&out.join("detuning_track.csv")).unwrap();
    for v in t.column("delta_hz").unwrap().into_iter().chain(t.column("track_hz").unwrap()) {
        assert!(v.abs() < 1.0, "{v}");
    }
}

#[test]
fn homodyne_report_shows_injected_heating() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("hom.conf");
    std::fs::write(
        &conf,
        format!(
            "{BASE}cool_powers_w = 10e-6, 20e-6, 30e-6, 40e-6, 50e-6, 60e-6\nnoise = false\nheating_k_per_w = 3e4\n\
             f_start_hz = 345e3\nf_stop_hz = 395e3\nbins = 12501\n{LIGHT}"
        ),
    )
    .unwrap();
    let syn = synth(dir.path(), &conf, "s");
    let out = dir.path().join("hom");
    ok(&analyze("homodyne", &conf, &syn, &out));
    let r = RunReport::read(&out.join("report.json")).unwrap();
    let h = r.results.homodyne.unwrap();
    let truth = read_json(&syn.join("truth.json"));
    let steps = truth["steps"].as_array().unwrap();
    let dt = steps.last().unwrap()["t_bath_k"].as_f64().unwrap() - 7.0;
    assert!((h.heating_delta_t_k / dt - 1.0).abs() < 0.1, "{} vs {dt}", h.heating_delta_t_k);
}

#[test]
fn render_writes_svgs_deterministically_with_stacked_bands() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "cool_powers_w = 10e-6, 30e-6, 60e-6\nwindows = 4\nseed = 9", "");
    let syn = synth(dir.path(), &conf, "s");
    for kind in ["homodyne", "heterodyne", "detuning"] {
        let out = dir.path().join(kind);
        ok(&analyze(kind, &conf, &syn, &out));
        let report = out.join("report.json");
        let (a, b) = (dir.path().join(format!("{kind}_a")), dir.path().join(format!("{kind}_b")));
        ok(&cli(&[&"render", &report, &"--out", &a]));
        ok(&cli(&[&"render", &report, &"--out", &b]));
        let svgs: Vec<String> = files(&a).into_iter().filter(|n| n.ends_with(".svg")).collect();
        assert!(!svgs.is_empty(), "{kind}");
        for n in files(&a) {
            assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{kind}/{n}");
        }
    }
    let ledger = Table::read(&dir.path().join("heterodyne/bath_budget.csv")).unwrap();
    let cols: Vec<Vec<f64>> = ["n_th_residual", "n_ba_cool", "n_ba_probe", "model"]
        .iter()
        .map(|c| ledger.column(c).unwrap())
        .collect();
    assert_eq!(cols[0].len(), 3);
    for i in 0..cols[0].len() {
        let sum = cols[0][i] + cols[1][i] + cols[2][i];
        assert!((sum - cols[3][i]).abs() <= 1e-12 * cols[3][i].abs(), "{sum} vs {}", cols[3][i]);
    }
    assert!(files(&dir.path().join("heterodyne_a")).contains(&"bath_budget.svg".to_string()));
}

#[test]
fn modes_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("m.conf");
    std::fs::write(&conf, "f0_hz = 96.6e3\nspot_r = 0.35\nspot_theta_rad = 0\nmode_table_m = 3\nmode_table_n = 2\n").unwrap();
    let out = cli(&[&"modes", &"--config", &conf, &"--out", &dir.path()]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.split_whitespace().take(2).eq(["1", "1"]) && l.contains("370142.")), "{text}");
    let t = Table::read(&dir.path().join("modes.csv")).unwrap();
    let (m, sin) = (t.column("m").unwrap(), t.column("weight_sin").unwrap());
    for (m, s) in m.iter().zip(&sin) {
        if *m >= 1.0 {
            assert_eq!(*s, 0.0);
        } else {
            assert!(s.is_nan());
        }
    }

    std::fs::write(&conf, "f0_hz = 96.6e3\nspot_r = 0\n").unwrap();
    ok(&cli(&[&"modes", &"--config", &conf, &"--out", &dir.path()]));
    let t = Table::read(&dir.path().join("modes.csv")).unwrap();
    for (m, w) in t.column("m").unwrap().iter().zip(t.column("weight_cos").unwrap()) {
        if *m >= 1.0 {
            assert_eq!(w, 0.0);
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |o: Output| o.status.code().unwrap();

    let bad = d.join("bad.conf");
    std::fs::write(&bad, "kappa_hz = fast\n").unwrap();
    assert_eq!(code(cli(&[&"synth", &"--config", &bad, &"--out", &d.join("x")])), 2);
    assert_eq!(code(cli(&[&"synth", &"--config", &d.join("missing.conf"), &"--out", &d.join("x")])), 4);
    assert_eq!(code(cli(&[&"analyze", &"--kind", &"sideways", &"in"])), 2);
    assert_eq!(code(cli(&[&"analyze", &"--kind", &"homodyne", &"--mask", &"5:1", &"in"])), 2);

    let conf = config(d, "cool_powers_w = 60e-6\nwindows = 2", "");
    let syn = synth(d, &conf, "s");
    let env = Command::new(env!("CARGO_BIN_EXE_optotherm"))
        .args(["synth", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(d.join("y"))
        .env("OPTOTHERM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(2));

    assert_eq!(code(analyze("heterodyne", &conf, &d.join("nope.csv"), &d.join("o1"))), 4);

    // heterodyne analysis of a single homodyne spectrum has nothing to fit
    let out = d.join("o2");
    let hom = syn.join("homodyne_step00.csv");
    assert_eq!(code(analyze("heterodyne", &conf, &hom, &out)), 3);
    let r = RunReport::read(&out.join("report.json")).unwrap();
    assert_eq!(r.status, "failed");
    assert!(r.failure.is_some());

    // a spectrum with a negative value
    let broken = d.join("broken.csv");
    let text = std::fs::read_to_string(&hom).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let last = lines.len() - 1;
    lines[last] = format!("{},-1", lines[last].split(',').next().unwrap());
    std::fs::write(&broken, lines.join("\n")).unwrap();
    let o = analyze("homodyne", &conf, &broken, &d.join("o3"));
    assert_eq!(code(o.clone()), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("broken.csv:{}", last + 1)));

    let junk = d.join("junk.json");
    std::fs::write(&junk, "{\"schema_version\": 1}").unwrap();
    assert_eq!(code(cli(&[&"render", &junk, &"--out", &d.join("r")])), 2);
}
