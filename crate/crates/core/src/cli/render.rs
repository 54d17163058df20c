//! Text summary and SVG plots of a report and its plot-data tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::plots::Table;
use super::report::RunReport;
use crate::error::{Error, Result};

const SIZE: (u32, u32) = (720, 460);
const PALETTE: [RGBColor; 5] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
];

enum Series {
    Line { label: String, pts: Vec<(f64, f64)> },
    Points { label: String, pts: Vec<(f64, f64, f64)> },
    /// Filled region between `lower` and `upper`, sharing abscissae.
    Band { label: String, x: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
}

struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl Plot {
    fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    fn line(mut self, label: &str, x: &[f64], y: &[f64]) -> Self {
        let pts = x.iter().zip(y).filter(|(a, b)| finite(**a) && finite(**b)).map(|(&a, &b)| (a, b)).collect();
        self.series.push(Series::Line { label: label.into(), pts });
        self
    }

    fn points(mut self, label: &str, x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Self {
        let pts = x
            .iter()
            .zip(y)
            .enumerate()
            .filter(|(_, (a, b))| finite(**a) && finite(**b))
            .map(|(i, (&a, &b))| (a, b, sigma.map_or(0.0, |s| if s[i].is_finite() { s[i] } else { 0.0 })))
            .collect();
        self.series.push(Series::Points { label: label.into(), pts });
        self
    }

    fn band(mut self, label: &str, x: &[f64], lower: &[f64], upper: &[f64]) -> Self {
        self.series.push(Series::Band {
            label: label.into(),
            x: x.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        });
        self
    }

    fn bounds(&self) -> Option<((f64, f64), (f64, f64))> {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        let mut take = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        };
        for s in &self.series {
            match s {
                Series::Line { pts, .. } => pts.iter().for_each(|&(x, y)| take(x, y)),
                Series::Points { pts, .. } => pts.iter().for_each(|&(x, y, e)| {
                    take(x, y - e);
                    take(x, y + e);
                }),
                Series::Band { x, lower, upper, .. } => {
                    for i in 0..x.len() {
                        take(x[i], lower[i]);
                        take(x[i], upper[i]);
                    }
                }
            }
        }
        if x0 > x1 {
            return None;
        }
        let pad = |a: f64, b: f64| {
            let w = if b > a { b - a } else { a.abs().max(1.0) };
            (a - 0.05 * w, b + 0.05 * w)
        };
        Some((pad(x0, x1), pad(y0, y1)))
    }

    fn to_svg(&self) -> Result<String> {
        let ((x0, x1), (y0, y1)) = self
            .bounds()
            .ok_or_else(|| Error::pipeline("render", format!("plot `{}` has no finite data", self.title)))?;
        let mut out = String::new();
        let err = |e: &dyn std::fmt::Display| Error::pipeline("render", e.to_string());
        {
            let root = SVGBackend::with_string(&mut out, SIZE).into_drawing_area();
            root.fill(&WHITE).map_err(|e| err(&e))?;
            let mut chart = ChartBuilder::on(&root)
                .caption(&self.title, ("sans-serif", 18))
                .margin(12)
                .x_label_area_size(40)
                .y_label_area_size(70)
                .build_cartesian_2d(x0..x1, y0..y1)
                .map_err(|e| err(&e))?;
            chart
                .configure_mesh()
                .x_desc(&self.x_label)
                .y_desc(&self.y_label)
                .x_labels(6)
                .y_labels(6)
                .draw()
                .map_err(|e| err(&e))?;
            for (k, s) in self.series.iter().enumerate() {
                let color = PALETTE[k % PALETTE.len()];
                match s {
                    Series::Line { label, pts } => {
                        chart
                            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                            .map_err(|e| err(&e))?
                            .label(label.clone())
                            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
                    }
                    Series::Points { label, pts } => {
                        chart
                            .draw_series(pts.iter().filter(|p| p.2 > 0.0).map(|&(x, y, e)| {
                                PathElement::new(vec![(x, y - e), (x, y + e)], color.stroke_width(1))
                            }))
                            .map_err(|e| err(&e))?;
                        chart
                            .draw_series(pts.iter().map(|&(x, y, _)| Circle::new((x, y), 3, color.filled())))
                            .map_err(|e| err(&e))?
                            .label(label.clone())
                            .legend(move |(x, y)| Circle::new((x + 9, y), 3, color.filled()));
                    }
                    Series::Band { label, x, lower, upper } => {
                        let mut poly: Vec<(f64, f64)> = x.iter().copied().zip(upper.iter().copied()).collect();
                        poly.extend(x.iter().copied().zip(lower.iter().copied()).rev());
                        chart
                            .draw_series(std::iter::once(Polygon::new(poly, color.mix(0.45).filled())))
                            .map_err(|e| err(&e))?
                            .label(label.clone())
                            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 18, y + 5)], color.mix(0.45).filled()));
                    }
                }
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.85))
                .border_style(BLACK)
                .draw()
                .map_err(|e| err(&e))?;
            root.present().map_err(|e| err(&e))?;
        }
        Ok(out)
    }
}

fn col(t: &Table, name: &str, file: &str) -> Result<Vec<f64>> {
    t.column(name)
        .ok_or_else(|| Error::parse(file, format!("plot data lacks column `{name}`")))
}

/// Keeps rows whose `flag` column is zero.
fn unflagged(t: &Table, x: &[f64], flag: &str) -> Vec<f64> {
    match t.column(flag) {
        Some(m) => x.iter().zip(m).map(|(&v, f)| if f != 0.0 { f64::NAN } else { v }).collect(),
        None => x.to_vec(),
    }
}

fn spectrum_plot(t: &Table, name: &str) -> Result<Plot> {
    let f = col(t, "frequency_hz", name)?;
    let fk: Vec<f64> = f.iter().map(|v| v * 1e-3).collect();
    let psd = col(t, "psd", name)?;
    let model = col(t, "model", name)?;
    Ok(Plot::new(name.trim_end_matches(".csv"), "frequency (kHz)", "PSD")
        .line("data", &fk, &unflagged(t, &psd, "masked"))
        .line("fit", &fk, &model))
}

fn area_width_plot(t: &Table, name: &str) -> Result<Plot> {
    let g = col(t, "gamma_hz", name)?;
    let aw = col(t, "area_width", name)?;
    let s = col(t, "sigma_area_width", name)?;
    Ok(Plot::new("area × width vs linewidth", "Γ_eff (Hz)", "A·Γ (Hz³)")
        .points("measured", &g, &aw, Some(&s))
        .line("model", &g, &col(t, "model", name)?)
        .line("free line", &g, &col(t, "line", name)?)
        .line("free quadratic", &g, &col(t, "quadratic", name)?))
}

fn windows_plot(t: &Table, name: &str) -> Result<Plot> {
    let step = col(t, "step", name)?;
    let win = col(t, "window", name)?;
    let n = col(t, "n_bar", name)?;
    let s = col(t, "sigma_n_bar", name)?;
    let per = win.iter().cloned().fold(0.0, f64::max) + 1.0;
    let x: Vec<f64> = step.iter().zip(&win).map(|(a, b)| a * per + b).collect();
    Ok(Plot::new("occupancy per window", "window (step-major)", "n̄").points("n̄", &x, &unflagged(t, &n, "excluded"), Some(&s)))
}

fn budget_plot(t: &Table, name: &str) -> Result<Plot> {
    let mut idx: Vec<usize> = (0..t.rows.len()).collect();
    let g = col(t, "gamma_eff_hz", name)?;
    idx.sort_by(|&a, &b| g[a].total_cmp(&g[b]));
    let pick = |c: &str| -> Result<Vec<f64>> {
        let v = col(t, c, name)?;
        Ok(idx.iter().map(|&i| v[i]).collect())
    };
    let x = pick("gamma_eff_hz")?;
    let th = pick("n_th_residual")?;
    let c = pick("n_ba_cool")?;
    let p = pick("n_ba_probe")?;
    let zero = vec![0.0; x.len()];
    let l1: Vec<f64> = th.clone();
    let l2: Vec<f64> = th.iter().zip(&c).map(|(a, b)| a + b).collect();
    let l3: Vec<f64> = l2.iter().zip(&p).map(|(a, b)| a + b).collect();
    Ok(Plot::new("occupancy vs linewidth", "Γ_eff (Hz)", "n̄")
        .band("thermal", &x, &zero, &l1)
        .band("cooling back-action", &x, &l1, &l2)
        .band("probe back-action", &x, &l2, &l3)
        .line("model", &x, &pick("model")?)
        .points("measured", &x, &pick("n_bar")?, Some(&pick("sigma_n_bar")?)))
}

fn track_plot(t: &Table, name: &str) -> Result<Plot> {
    let tm = col(t, "midpoint_s", name)?;
    let d: Vec<f64> = col(t, "delta_hz", name)?.iter().map(|v| v * 1e-3).collect();
    let s: Vec<f64> = col(t, "sigma_hz", name)?.iter().map(|v| v * 1e-3).collect();
    let tr: Vec<f64> = col(t, "track_hz", name)?.iter().map(|v| v * 1e-3).collect();
    Ok(Plot::new("probe detuning track", "time (s)", "Δ_probe/2π (kHz)")
        .points("per window", &tm, &d, Some(&s))
        .line("track", &tm, &tr))
}

fn summary(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} ({})", r.tool, r.version, r.invocation.command);
    if let Some(k) = &r.invocation.kind {
        let _ = writeln!(s, "kind: {k}");
    }
    let _ = writeln!(s, "config: {}", r.config_digest);
    let _ = writeln!(s, "status: {}", r.status);
    if let Some(f) = &r.failure {
        let _ = writeln!(s, "failure: {f}");
    }
    if let Some(h) = &r.results.homodyne {
        let _ = writeln!(s, "\nhomodyne: g0/2π = {:.4} ± {:.4} Hz", h.g0_hz, h.sigma_g0_hz);
        let _ = writeln!(
            s,
            "  slope/offset = {:.4e} ± {:.1e} /Hz (model {:.4e})",
            h.slope_over_offset, h.sigma_slope_over_offset, h.model_slope_over_offset
        );
        let _ = writeln!(s, "  heating at top power = {:.3} ± {:.3} K", h.heating_delta_t_k, h.sigma_heating_delta_t_k);
        if let (Some(f), Some(e)) = (h.extra_noise_fraction, h.sigma_extra_noise_fraction) {
            let _ = writeln!(s, "  extra-noise fraction = {:.3} ± {:.3}", f, e);
        }
        let _ = writeln!(s, "  {:>10} {:>12} {:>10}", "power (W)", "Γ_eff (Hz)", "n̄");
        for st in &h.steps {
            let _ = writeln!(s, "  {:>10.3e} {:>12.2} {:>10.3}", st.power_w, st.gamma_eff_hz, st.n_bar);
        }
    }
    if !r.results.heterodyne.is_empty() {
        let _ = writeln!(s, "\nheterodyne:");
        let _ = writeln!(s, "  {:>4} {:>10} {:>10} {:>8} {:>9}", "step", "power (W)", "n̄", "std", "windows");
        for st in &r.results.heterodyne {
            match &st.result {
                Some(h) => {
                    let _ = writeln!(
                        s,
                        "  {:>4} {:>10.3e} {:>10.3} {:>8.3} {:>4}/{:<4} {}",
                        st.step,
                        st.power_w,
                        h.n_bar_mean,
                        h.n_bar_std,
                        h.accepted,
                        h.accepted + h.excluded,
                        h.correction_method.as_str()
                    );
                }
                None => {
                    let _ = writeln!(s, "  {:>4} {:>10.3e} failed: {}", st.step, st.power_w, st.failure.as_deref().unwrap_or(""));
                }
            }
        }
    }
    if let Some(b) = &r.results.bath {
        let _ = writeln!(s, "\nbath temperature = {:.3} ± {:.3} K (leverage {:.1}×)", b.t_bath_k, b.sigma_t_k, b.leverage);
    }
    for st in &r.results.detuning {
        if let Some(mm) = &st.result {
            let _ = writeln!(s, "\ndetuning, step {}:", st.step);
            for (i, (d, e)) in mm.delta_hz.iter().enumerate() {
                let _ = writeln!(s, "  window {i:>2}: Δ/2π = {:>10.1} ± {:>7.1} Hz{}", d, e, if mm.from_track[i] { " (track)" } else { "" });
            }
            if let Some(t) = &mm.track {
                let _ = writeln!(s, "  track coefficients (Hz, Hz/s, ...): {:?}", t.coefficients);
            }
        }
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "\nwarnings:");
        for w in &r.warnings {
            let _ = writeln!(s, "  {w}");
        }
    }
    s
}

/// Writes `summary.txt` and one SVG per plot-data table into `out`.
/// Returns the summary and the files written.
pub fn render(report_path: &Path, out: &Path) -> Result<(String, Vec<PathBuf>)> {
    let report = RunReport::read(report_path)?;
    let base = report_path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for name in &report.plot_data {
        let table = Table::read(&base.join(name))?;
        let plot = if name.starts_with("homodyne_fit") || name.starts_with("heterodyne_fit") {
            spectrum_plot(&table, name)?
        } else if name == "homodyne_area_width.csv" {
            area_width_plot(&table, name)?
        } else if name == "heterodyne_windows.csv" {
            windows_plot(&table, name)?
        } else if name == "bath_budget.csv" {
            budget_plot(&table, name)?
        } else if name == "detuning_track.csv" {
            track_plot(&table, name)?
        } else {
            continue;
        };
        let path = out.join(name.replace(".csv", ".svg"));
        std::fs::write(&path, plot.to_svg()?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let text = summary(&report);
    let path = out.join("summary.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok((text, written))
}
