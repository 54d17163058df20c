#ifndef OPTOTHERM_H
#define OPTOTHERM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Codes 2 to 4 match the command-line exit codes.
typedef enum OtStatus {
  OT_STATUS_OK = 0,
  OT_STATUS_NULL_POINTER = 1,
  // Bad configuration, spectrum or parameter.
  OT_STATUS_INVALID = 2,
  // A fit or analysis stage failed.
  OT_STATUS_PIPELINE = 3,
  OT_STATUS_IO = 4,
  OT_STATUS_INVALID_UTF8 = 5,
  OT_STATUS_OUT_OF_RANGE = 6,
  // The caller's buffer is shorter than the data; the needed length is still reported.
  OT_STATUS_BUFFER_TOO_SMALL = 7,
  OT_STATUS_PANIC = 8,
} OtStatus;

typedef enum OtKind {
  OT_KIND_HOMODYNE = 0,
  OT_KIND_HETERODYNE = 1,
} OtKind;

typedef struct OtHeterodyne OtHeterodyne;

typedef struct OtHomodyne OtHomodyne;

// Parsed configuration: membrane, synthetic scenario and analysis settings.
typedef struct OtSetup OtSetup;

typedef struct OtSpectrum OtSpectrum;

// Headline numbers of a heterodyne run. Missing values are NaN.
typedef struct OtHeterodyneSummary {
  double n_bar_mean;
  double n_bar_std;
  double n_bar_from_mean_ratio;
  double r_light_mean;
  double r_corrected_mean;
  double gamma_eff_hz;
  double sigma_gamma_eff_hz;
  size_t accepted;
  size_t excluded;
} OtHeterodyneSummary;

// One heterodyne window. Missing values are NaN.
typedef struct OtWindow {
  size_t window_index;
  double midpoint_s;
  double r_light;
  double correction;
  double r_corrected;
  double n_bar;
  double sigma_n_bar;
  double delta_probe_hz;
  bool excluded;
} OtWindow;

// Missing values are NaN.
typedef struct OtHomodyneSummary {
  double g0_hz;
  double sigma_g0_hz;
  double scale;
  double slope_over_offset;
  double sigma_slope_over_offset;
  double heating_delta_t_k;
  double sigma_heating_delta_t_k;
  double extra_noise_fraction;
  size_t steps;
} OtHomodyneSummary;

typedef struct OtBath {
  double t_bath_k;
  double sigma_t_k;
  double n_th;
  double sigma_n_th;
  double chi_square;
  double leverage;
} OtBath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// Valid until the next call on the same thread.
const char *ot_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ot_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void ot_string_free(char *s);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum OtStatus ot_setup_from_file(const char *path, struct OtSetup **out);

// # Safety
// `text` is a NUL-terminated string; `out` is writable.
enum OtStatus ot_setup_parse(const char *text, struct OtSetup **out);

// # Safety
// `setup` comes from this library and is not used afterwards.
void ot_setup_free(struct OtSetup *setup);

// Number of cooling-power steps.
//
// # Safety
// Pointers are valid or null.
enum OtStatus ot_setup_steps(const struct OtSetup *setup, size_t *out);

// Heterodyne windows per step.
//
// # Safety
// Pointers are valid or null.
enum OtStatus ot_setup_windows(const struct OtSetup *setup, size_t *out);

// Cooling power of `step`, W.
//
// # Safety
// Pointers are valid or null.
enum OtStatus ot_setup_cool_power(const struct OtSetup *setup, size_t step, double *out);

// # Safety
// `setup` is valid or null.
enum OtStatus ot_setup_set_seed(struct OtSetup *setup, uint64_t seed);

// # Safety
// `setup` is valid or null.
enum OtStatus ot_setup_set_noise(struct OtSetup *setup, bool noise);

// # Safety
// `setup` is valid or null.
enum OtStatus ot_setup_set_windows(struct OtSetup *setup, size_t windows);

// Synthesizes one spectrum of the scenario, with measurement noise when the
// scenario asks for it. `window` is ignored for homodyne.
//
// # Safety
// Pointers are valid or null.
enum OtStatus ot_synth(const struct OtSetup *setup,
                       enum OtKind kind,
                       size_t step,
                       size_t window,
                       struct OtSpectrum **out);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum OtStatus ot_spectrum_read_csv(const char *path, struct OtSpectrum **out);

// # Safety
// `text` is a NUL-terminated string; `out` is writable.
enum OtStatus ot_spectrum_from_csv(const char *text, struct OtSpectrum **out);

// # Safety
// Pointers are valid or null.
enum OtStatus ot_spectrum_write_csv(const struct OtSpectrum *spectrum, const char *path);

// # Safety
// `spectrum` comes from this library and is not used afterwards.
void ot_spectrum_free(struct OtSpectrum *spectrum);

// Number of bins, or 0 for a null handle.
//
// # Safety
// `spectrum` is valid or null.
size_t ot_spectrum_len(const struct OtSpectrum *spectrum);

// First bin frequency and bin spacing, Hz.
//
// # Safety
// Pointers are valid or null.
enum OtStatus ot_spectrum_grid(const struct OtSpectrum *spectrum, double *f_start, double *f_step);

// Copies up to `capacity` values into `buffer` and writes the full length to `len`.
//
// # Safety
// `buffer` holds `capacity` doubles (may be null when `capacity` is 0).
enum OtStatus ot_spectrum_values(const struct OtSpectrum *spectrum,
                                 double *buffer,
                                 size_t capacity,
                                 size_t *len);

// Sideband-asymmetry analysis of the windows of one power step.
//
// # Safety
// `windows` holds `count` valid spectrum handles.
enum OtStatus ot_heterodyne_analyze(const struct OtSetup *setup,
                                    const struct OtSpectrum *const *windows,
                                    size_t count,
                                    struct OtHeterodyne **out);

// # Safety
// `result` comes from this library and is not used afterwards.
void ot_heterodyne_free(struct OtHeterodyne *result);

// # Safety
// Pointers are valid or null.
enum OtStatus ot_heterodyne_summary(const struct OtHeterodyne *result,
                                    struct OtHeterodyneSummary *out);

// Number of windows in the result, or 0 for a null handle.
//
// # Safety
// `result` is valid or null.
size_t ot_heterodyne_window_count(const struct OtHeterodyne *result);

// # Safety
// Pointers are valid or null.
enum OtStatus ot_heterodyne_window(const struct OtHeterodyne *result,
                                   size_t i,
                                   struct OtWindow *out);

// Full result as JSON; release with `ot_string_free`.
//
// # Safety
// Pointers are valid or null.
enum OtStatus ot_heterodyne_to_json(const struct OtHeterodyne *result, char **out);

// Area-width analysis over power steps: one homodyne spectrum per step with its cooling power (W).
//
// # Safety
// `powers` holds `count` doubles and `spectra` holds `count` valid handles.
enum OtStatus ot_homodyne_analyze(const struct OtSetup *setup,
                                  const double *powers,
                                  const struct OtSpectrum *const *spectra,
                                  size_t count,
                                  struct OtHomodyne **out);

// # Safety
// `result` comes from this library and is not used afterwards.
void ot_homodyne_free(struct OtHomodyne *result);

// # Safety
// Pointers are valid or null.
enum OtStatus ot_homodyne_summary(const struct OtHomodyne *result, struct OtHomodyneSummary *out);

// # Safety
// Pointers are valid or null.
enum OtStatus ot_homodyne_to_json(const struct OtHomodyne *result, char **out);

// Bath temperature from heterodyne results at `count` cooling powers (W).
//
// # Safety
// `powers` holds `count` doubles and `results` holds `count` valid handles.
enum OtStatus ot_bath_fit(const struct OtSetup *setup,
                          const double *powers,
                          const struct OtHeterodyne *const *results,
                          size_t count,
                          bool include_back_action,
                          struct OtBath *out);

// Thermal occupancy at `t_bath` (K) for a mode at `omega_m` (rad/s).
//
// # Safety
// `out` is writable or null.
enum OtStatus ot_n_thermal(double t_bath, double omega_m, double *out);

// # Safety
// `out` is writable or null.
enum OtStatus ot_temperature_from_occupancy(double n_th, double omega_m, double *out);

// Occupancy from a sideband ratio; fails unless `r > 1`.
//
// # Safety
// `out` is writable or null.
enum OtStatus ot_n_from_ratio(double r, double *out);

// Cavity gain of the Stokes over the anti-Stokes sideband.
//
// # Safety
// `out` is writable or null.
enum OtStatus ot_cavity_filter_ratio(double delta_probe, double omega_m, double kappa, double *out);

// Back-action occupancy floor of the cooling beam.
//
// # Safety
// `out` is writable or null.
enum OtStatus ot_n_ba_cool(double delta_cool, double omega_m, double kappa, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTOTHERM_H */
