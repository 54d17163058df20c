//! Scenario shared by the ABI tests: a light mode plus three bright auxiliary
//! modes on a coarse grid, analysed with the multimode correction.

pub const CONFIG: &str = "
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
f_start_hz = 220e3
f_stop_hz = 690e3
bins = 47001
correction = multimode
cool_powers_w = 10e-6, 30e-6, 60e-6
windows = 2
seed = 4

[mode.light]
role = light
q = 8.9e6
g0_hz = 31
weight = 1
damping_hz_per_w = 9.62e7
spring_hz_per_w = 2e7
";

pub fn config() -> String {
    let aux: String = [(0, 1), (2, 1), (0, 2)]
        .iter()
        .map(|(m, n)| {
            format!(
                "\n[mode.aux{m}{n}]\nrole = aux\nm = {m}\nn = {n}\ngamma_hz = 1000\ng0_hz = 31\nweight = 1e-3\nn_bar = 1e6\n\
                 mask_half_width_hz = 4e3\nhalf_window_hz = 5e3\nsearch_hz = 1e3\n"
            )
        })
        .collect();
    format!("{CONFIG}{aux}")
}
