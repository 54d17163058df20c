//! C ABI over the optotherm library.
//!
//! Every fallible call returns an [`OtStatus`]. On failure the message is kept
//! per thread and read with [`ot_last_error_message`]. Handles are opaque and
//! owned by the caller, who releases them with the matching `*_free`.
//! Frequencies passed to the physics helpers are angular (rad/s).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use optotherm::physics;
use optotherm::setup::Setup;
use optotherm::synth::{apply_measurement_noise, DetectionKind, Spectrum, SynthScenario};
use optotherm::thermometry::{
    bath_temperature, heterodyne_pipeline, homodyne_pipeline, BathOptions, BathPoint, HeterodyneResult, HomodyneResult,
};
use optotherm::Error;

/// Result of every fallible call. Codes 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration, spectrum or parameter.
    Invalid = 2,
    /// A fit or analysis stage failed.
    Pipeline = 3,
    Io = 4,
    InvalidUtf8 = 5,
    OutOfRange = 6,
    /// The caller's buffer is shorter than the data; the needed length is still reported.
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtKind {
    Homodyne = 0,
    Heterodyne = 1,
}

/// Parsed configuration: membrane, synthetic scenario and analysis settings.
pub struct OtSetup(Setup);

pub struct OtSpectrum(Spectrum);

pub struct OtHeterodyne(HeterodyneResult);

pub struct OtHomodyne(HomodyneResult);

/// Headline numbers of a heterodyne run. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtHeterodyneSummary {
    pub n_bar_mean: f64,
    pub n_bar_std: f64,
    pub n_bar_from_mean_ratio: f64,
    pub r_light_mean: f64,
    pub r_corrected_mean: f64,
    pub gamma_eff_hz: f64,
    pub sigma_gamma_eff_hz: f64,
    pub accepted: usize,
    pub excluded: usize,
}

/// One heterodyne window. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtWindow {
    pub window_index: usize,
    pub midpoint_s: f64,
    pub r_light: f64,
    pub correction: f64,
    pub r_corrected: f64,
    pub n_bar: f64,
    pub sigma_n_bar: f64,
    pub delta_probe_hz: f64,
    pub excluded: bool,
}

/// Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtHomodyneSummary {
    pub g0_hz: f64,
    pub sigma_g0_hz: f64,
    pub scale: f64,
    pub slope_over_offset: f64,
    pub sigma_slope_over_offset: f64,
    pub heating_delta_t_k: f64,
    pub sigma_heating_delta_t_k: f64,
    pub extra_noise_fraction: f64,
    pub steps: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtBath {
    pub t_bath_k: f64,
    pub sigma_t_k: f64,
    pub n_th: f64,
    pub sigma_n_th: f64,
    pub chi_square: f64,
    pub leverage: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(OtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => OtStatus::Invalid,
            4 => OtStatus::Io,
            _ => OtStatus::Pipeline,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult) -> OtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OtStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(OtStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn get_mut<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_box<T>(out: *mut *mut T, value: T) -> FfiResult {
    put(out, Box::into_raw(Box::new(value)), "out")
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(OtStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

/// Borrowed handles from a caller array of `count` pointers.
unsafe fn handles<'a, T>(items: *const *const T, count: usize, name: &str) -> FfiResult<Vec<&'a T>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if items.is_null() {
        return Err(null(name));
    }
    std::slice::from_raw_parts(items, count)
        .iter()
        .map(|&p| get(p, name))
        .collect()
}

unsafe fn doubles<'a>(items: *const f64, count: usize, name: &str) -> FfiResult<&'a [f64]> {
    if count == 0 {
        return Ok(&[]);
    }
    if items.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(items, count))
}

unsafe fn put_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> FfiResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure(OtStatus::Invalid, e.to_string()))?;
    let c = CString::new(text).map_err(|e| Failure(OtStatus::Invalid, e.to_string()))?;
    put(out, c.into_raw(), "out")
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ot_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- setup ----

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_from_file(path: *const c_char, out: *mut *mut OtSetup) -> OtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put_box(out, OtSetup(Setup::from_file(Path::new(path))?))
    })
}

/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_parse(text: *const c_char, out: *mut *mut OtSetup) -> OtStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        put_box(out, OtSetup(Setup::parse("<memory>", text)?))
    })
}

/// # Safety
/// `setup` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_free(setup: *mut OtSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

unsafe fn scenario<'a>(setup: *const OtSetup) -> FfiResult<&'a SynthScenario> {
    Ok(&get(setup, "setup")?.0.device()?.scenario)
}

unsafe fn scenario_mut<'a>(setup: *mut OtSetup) -> FfiResult<&'a mut SynthScenario> {
    Ok(&mut get_mut(setup, "setup")?.0.device_mut()?.scenario)
}

/// Number of cooling-power steps.
///
/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_steps(setup: *const OtSetup, out: *mut usize) -> OtStatus {
    guard(|| put(out, scenario(setup)?.steps(), "out"))
}

/// Heterodyne windows per step.
///
/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_windows(setup: *const OtSetup, out: *mut usize) -> OtStatus {
    guard(|| put(out, scenario(setup)?.windows, "out"))
}

/// Cooling power of `step`, W.
///
/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_cool_power(setup: *const OtSetup, step: usize, out: *mut f64) -> OtStatus {
    guard(|| {
        let sc = scenario(setup)?;
        let p = sc
            .cool_powers
            .get(step)
            .ok_or_else(|| Failure(OtStatus::OutOfRange, format!("step {step} outside {} steps", sc.steps())))?;
        put(out, *p, "out")
    })
}

/// # Safety
/// `setup` is valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_set_seed(setup: *mut OtSetup, seed: u64) -> OtStatus {
    guard(|| {
        scenario_mut(setup)?.rng_seed = seed;
        Ok(())
    })
}

/// # Safety
/// `setup` is valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_set_noise(setup: *mut OtSetup, noise: bool) -> OtStatus {
    guard(|| {
        scenario_mut(setup)?.noise = noise;
        Ok(())
    })
}

/// # Safety
/// `setup` is valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_setup_set_windows(setup: *mut OtSetup, windows: usize) -> OtStatus {
    guard(|| {
        if windows == 0 {
            return Err(Failure(OtStatus::Invalid, "windows must be >= 1".into()));
        }
        scenario_mut(setup)?.windows = windows;
        Ok(())
    })
}

/// Synthesizes one spectrum of the scenario, with measurement noise when the
/// scenario asks for it. `window` is ignored for homodyne.
///
/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_synth(
    setup: *const OtSetup,
    kind: OtKind,
    step: usize,
    window: usize,
    out: *mut *mut OtSpectrum,
) -> OtStatus {
    guard(|| {
        let sc = scenario(setup)?;
        sc.validate()?;
        if step >= sc.steps() {
            return Err(Failure(OtStatus::OutOfRange, format!("step {step} outside {} steps", sc.steps())));
        }
        let (kind, window, s) = match kind {
            OtKind::Homodyne => (DetectionKind::Homodyne, 0, sc.synth_homodyne(step)?),
            OtKind::Heterodyne => {
                if window >= sc.windows {
                    return Err(Failure(OtStatus::OutOfRange, format!("window {window} outside {} windows", sc.windows)));
                }
                (DetectionKind::Heterodyne, window, sc.synth_heterodyne(step, window)?)
            }
        };
        let s = if sc.noise {
            apply_measurement_noise(&s, sc.rng_seed, SynthScenario::stream_id(kind, step, window))?
        } else {
            s
        };
        put_box(out, OtSpectrum(s))
    })
}

// ---- spectrum ----

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_read_csv(path: *const c_char, out: *mut *mut OtSpectrum) -> OtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put_box(out, OtSpectrum(Spectrum::read_csv(Path::new(path))?))
    })
}

/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_from_csv(text: *const c_char, out: *mut *mut OtSpectrum) -> OtStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        put_box(out, OtSpectrum(Spectrum::from_csv("<memory>", text)?))
    })
}

/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_write_csv(spectrum: *const OtSpectrum, path: *const c_char) -> OtStatus {
    guard(|| {
        let s = get(spectrum, "spectrum")?;
        let path = str_arg(path, "path")?;
        Ok(s.0.write_csv(Path::new(path))?)
    })
}

/// # Safety
/// `spectrum` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_free(spectrum: *mut OtSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Number of bins, or 0 for a null handle.
///
/// # Safety
/// `spectrum` is valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_len(spectrum: *const OtSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.0.len())
}

/// First bin frequency and bin spacing, Hz.
///
/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_grid(spectrum: *const OtSpectrum, f_start: *mut f64, f_step: *mut f64) -> OtStatus {
    guard(|| {
        let s = &get(spectrum, "spectrum")?.0;
        put(f_start, s.f_start, "f_start")?;
        put(f_step, s.f_step, "f_step")
    })
}

/// Copies up to `capacity` values into `buffer` and writes the full length to `len`.
///
/// # Safety
/// `buffer` holds `capacity` doubles (may be null when `capacity` is 0).
#[no_mangle]
pub unsafe extern "C" fn ot_spectrum_values(
    spectrum: *const OtSpectrum,
    buffer: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> OtStatus {
    guard(|| {
        let v = &get(spectrum, "spectrum")?.0.values;
        put(len, v.len(), "len")?;
        if capacity < v.len() {
            return Err(Failure(OtStatus::BufferTooSmall, format!("need {} values, buffer holds {capacity}", v.len())));
        }
        if !v.is_empty() {
            if buffer.is_null() {
                return Err(null("buffer"));
            }
            std::ptr::copy_nonoverlapping(v.as_ptr(), buffer, v.len());
        }
        Ok(())
    })
}

// ---- analysis ----

/// Sideband-asymmetry analysis of the windows of one power step.
///
/// # Safety
/// `windows` holds `count` valid spectrum handles.
#[no_mangle]
pub unsafe extern "C" fn ot_heterodyne_analyze(
    setup: *const OtSetup,
    windows: *const *const OtSpectrum,
    count: usize,
    out: *mut *mut OtHeterodyne,
) -> OtStatus {
    guard(|| {
        let config = &get(setup, "setup")?.0.device()?.analysis;
        let spectra: Vec<Spectrum> = handles(windows, count, "windows")?.into_iter().map(|s| s.0.clone()).collect();
        put_box(out, OtHeterodyne(heterodyne_pipeline(&spectra, config)?))
    })
}

/// # Safety
/// `result` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ot_heterodyne_free(result: *mut OtHeterodyne) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_heterodyne_summary(result: *const OtHeterodyne, out: *mut OtHeterodyneSummary) -> OtStatus {
    guard(|| {
        let r = &get(result, "result")?.0;
        let s = OtHeterodyneSummary {
            n_bar_mean: r.n_bar_mean,
            n_bar_std: r.n_bar_std,
            n_bar_from_mean_ratio: r.n_bar_from_mean_ratio,
            r_light_mean: r.r_light_mean,
            r_corrected_mean: r.r_corrected_mean,
            gamma_eff_hz: r.gamma_eff_hz,
            sigma_gamma_eff_hz: r.sigma_gamma_eff_hz,
            accepted: r.accepted,
            excluded: r.excluded,
        };
        put(out, s, "out")
    })
}

/// Number of windows in the result, or 0 for a null handle.
///
/// # Safety
/// `result` is valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_heterodyne_window_count(result: *const OtHeterodyne) -> usize {
    result.as_ref().map_or(0, |r| r.0.windows.len())
}

/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_heterodyne_window(result: *const OtHeterodyne, i: usize, out: *mut OtWindow) -> OtStatus {
    guard(|| {
        let ws = &get(result, "result")?.0.windows;
        let w = ws
            .get(i)
            .ok_or_else(|| Failure(OtStatus::OutOfRange, format!("window {i} outside {}", ws.len())))?;
        let v = OtWindow {
            window_index: w.window_index,
            midpoint_s: w.midpoint_s,
            r_light: opt(w.r_light),
            correction: opt(w.correction),
            r_corrected: opt(w.r_corrected),
            n_bar: opt(w.n_bar),
            sigma_n_bar: opt(w.sigma_n_bar),
            delta_probe_hz: opt(w.delta_probe_hz),
            excluded: w.excluded.is_some(),
        };
        put(out, v, "out")
    })
}

/// Full result as JSON; release with `ot_string_free`.
///
/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_heterodyne_to_json(result: *const OtHeterodyne, out: *mut *mut c_char) -> OtStatus {
    guard(|| put_json(out, &get(result, "result")?.0))
}

/// Area-width analysis over power steps: one homodyne spectrum per step with its cooling power (W).
///
/// # Safety
/// `powers` holds `count` doubles and `spectra` holds `count` valid handles.
#[no_mangle]
pub unsafe extern "C" fn ot_homodyne_analyze(
    setup: *const OtSetup,
    powers: *const f64,
    spectra: *const *const OtSpectrum,
    count: usize,
    out: *mut *mut OtHomodyne,
) -> OtStatus {
    guard(|| {
        let config = &get(setup, "setup")?.0.device()?.analysis;
        let powers = doubles(powers, count, "powers")?;
        let spectra = handles(spectra, count, "spectra")?;
        let input: Vec<(f64, Spectrum)> = powers.iter().zip(spectra).map(|(&p, s)| (p, s.0.clone())).collect();
        put_box(out, OtHomodyne(homodyne_pipeline(&input, config)?))
    })
}

/// # Safety
/// `result` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ot_homodyne_free(result: *mut OtHomodyne) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_homodyne_summary(result: *const OtHomodyne, out: *mut OtHomodyneSummary) -> OtStatus {
    guard(|| {
        let r = &get(result, "result")?.0;
        let s = OtHomodyneSummary {
            g0_hz: r.g0_hz,
            sigma_g0_hz: r.sigma_g0_hz,
            scale: r.scale,
            slope_over_offset: r.slope_over_offset,
            sigma_slope_over_offset: r.sigma_slope_over_offset,
            heating_delta_t_k: r.heating_delta_t_k,
            sigma_heating_delta_t_k: r.sigma_heating_delta_t_k,
            extra_noise_fraction: opt(r.extra_noise_fraction),
            steps: r.steps.len(),
        };
        put(out, s, "out")
    })
}

/// # Safety
/// Pointers are valid or null.
#[no_mangle]
pub unsafe extern "C" fn ot_homodyne_to_json(result: *const OtHomodyne, out: *mut *mut c_char) -> OtStatus {
    guard(|| put_json(out, &get(result, "result")?.0))
}

/// Bath temperature from heterodyne results at `count` cooling powers (W).
///
/// # Safety
/// `powers` holds `count` doubles and `results` holds `count` valid handles.
#[no_mangle]
pub unsafe extern "C" fn ot_bath_fit(
    setup: *const OtSetup,
    powers: *const f64,
    results: *const *const OtHeterodyne,
    count: usize,
    include_back_action: bool,
    out: *mut OtBath,
) -> OtStatus {
    guard(|| {
        let config = &get(setup, "setup")?.0.device()?.analysis;
        let powers = doubles(powers, count, "powers")?;
        let results = handles(results, count, "results")?;
        let series: Vec<BathPoint> = powers
            .iter()
            .zip(results)
            .map(|(&p, r)| BathPoint::from_heterodyne(p, &r.0))
            .collect();
        let options = BathOptions {
            include_back_action,
            ..BathOptions::default()
        };
        let b = bath_temperature(&series, config, options)?;
        let v = OtBath {
            t_bath_k: b.t_bath_k,
            sigma_t_k: b.sigma_t_k,
            n_th: b.n_th,
            sigma_n_th: b.sigma_n_th,
            chi_square: b.chi_square,
            leverage: b.leverage,
        };
        put(out, v, "out")
    })
}

// ---- physics ----

/// Thermal occupancy at `t_bath` (K) for a mode at `omega_m` (rad/s).
///
/// # Safety
/// `out` is writable or null.
#[no_mangle]
pub unsafe extern "C" fn ot_n_thermal(t_bath: f64, omega_m: f64, out: *mut f64) -> OtStatus {
    guard(|| put(out, physics::n_thermal(t_bath, omega_m)?, "out"))
}

/// # Safety
/// `out` is writable or null.
#[no_mangle]
pub unsafe extern "C" fn ot_temperature_from_occupancy(n_th: f64, omega_m: f64, out: *mut f64) -> OtStatus {
    guard(|| put(out, physics::temperature_from_occupancy(n_th, omega_m)?, "out"))
}

/// Occupancy from a sideband ratio; fails unless `r > 1`.
///
/// # Safety
/// `out` is writable or null.
#[no_mangle]
pub unsafe extern "C" fn ot_n_from_ratio(r: f64, out: *mut f64) -> OtStatus {
    guard(|| put(out, physics::n_from_ratio(r)?, "out"))
}

/// Cavity gain of the Stokes over the anti-Stokes sideband.
///
/// # Safety
/// `out` is writable or null.
#[no_mangle]
pub unsafe extern "C" fn ot_cavity_filter_ratio(delta_probe: f64, omega_m: f64, kappa: f64, out: *mut f64) -> OtStatus {
    guard(|| put(out, physics::cavity_filter_ratio(delta_probe, omega_m, kappa)?, "out"))
}

/// Back-action occupancy floor of the cooling beam.
///
/// # Safety
/// `out` is writable or null.
#[no_mangle]
pub unsafe extern "C" fn ot_n_ba_cool(delta_cool: f64, omega_m: f64, kappa: f64, out: *mut f64) -> OtStatus {
    guard(|| put(out, physics::n_ba_cool(delta_cool, omega_m, kappa)?, "out"))
}
