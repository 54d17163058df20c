use super::*;
use crate::physics::constants::hz_to_angular as w;
use crate::physics::{ModeIndex, Twin};

fn light(weight: f64) -> ScenarioMode {
    ScenarioMode {
        label: "light".into(),
        role: ModeRole::Light,
        mode: MechanicalMode::from_q(ModeIndex::new(1, 1, Twin::Cos).unwrap(), w(370e3), 8.9e6, w(31.0), weight).unwrap(),
        occupancy: Occupancy::Budget,
        damping_per_watt: w(9.62e7),
        spring_per_watt: w(2e7),
    }
}

fn heavy() -> ScenarioMode {
    ScenarioMode {
        label: "heavy".into(),
        role: ModeRole::Heavy,
        mode: MechanicalMode::from_width(ModeIndex::new(1, 1, Twin::Sin).unwrap(), w(370e3), w(20.0), w(31.0), 0.05).unwrap(),
        occupancy: Occupancy::Fixed(1e5),
        damping_per_watt: 0.0,
        spring_per_watt: 0.0,
    }
}

pub(crate) fn scenario() -> SynthScenario {
    SynthScenario {
        cavity: CavitySpec::new(w(1.4e6)).unwrap(),
        probe: BeamSpec::probe(18e-6, 0.0).unwrap(),
        drift: DetuningDrift::constant(0.0),
        cool_detuning: w(-700e3),
        cool_powers: vec![10e-6, 20e-6, 40e-6, 60e-6],
        delta_lo: w(9e3),
        modes: vec![light(1.0), heavy()],
        t_bath: 7.0,
        heating_per_watt: 0.0,
        extra_noise_fraction: 0.0,
        grid: Grid::spanning(300e3, 440e3, 70_001).unwrap(),
        homodyne_floor: LinearFloor::default(),
        heterodyne_floor: LinearFloor::default(),
        homodyne_spurious: vec![],
        heterodyne_spurious: vec![],
        calibration_tone: None,
        heterodyne_gain: 1.0,
        averaging_count: 10,
        windows: 3,
        window_duration: 10.0,
        rng_seed: 7,
        noise: false,
    }
}

fn trapezoid(s: &Spectrum, lo: f64, hi: f64) -> f64 {
    let r = s.index_range(lo, hi);
    let v = &s.values[r];
    s.f_step * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

/// Closed form of the tail mass a Lorentzian leaves outside `[c − a, c + b]`.
fn outside(area: f64, fwhm: f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * fwhm;
    area * (1.0 - ((a / h).atan() + (b / h).atan()) / std::f64::consts::PI)
}

#[test]
fn homodyne_area_times_width_matches_budget() {
    let mut sc = scenario();
    sc.modes = vec![light(1.0)];
    sc.grid = Grid::spanning(250e3, 490e3, 400_001).unwrap();
    let s = sc.synth_homodyne(3).unwrap();
    let t = sc.step_truth(3).unwrap();
    let m = &t.modes[0];
    let integral = trapezoid(&s, 250e3, 490e3) + outside(m.homodyne_area, m.gamma_eff_hz, m.center_hz - 250e3, 490e3 - m.center_hz);
    let b = m.budget.unwrap();
    let awp = physics::area_width_product(31.0, 370e3 / 8.9e6, m.gamma_eff_hz, b.n_th_residual * m.gamma_eff_hz / (370e3 / 8.9e6), b.n_ba_cool, b.n_ba_probe).unwrap();
    assert!((integral * m.gamma_eff_hz / awp - 1.0).abs() < 1e-3, "{} vs {awp}", integral * m.gamma_eff_hz);
}

#[test]
fn no_modes_gives_the_floor() {
    let mut sc = scenario();
    sc.modes.clear();
    sc.homodyne_floor = LinearFloor { offset: 2.0, slope: 1e-5 };
    let s = sc.synth_homodyne(0).unwrap();
    let c = sc.grid.center();
    for (i, v) in s.values.iter().enumerate() {
        assert_eq!(*v, 2.0 + 1e-5 * (s.frequency(i) - c));
    }
}

#[test]
fn light_twin_broad_and_red_shifted_at_top_power() {
    let sc = scenario();
    let t = sc.step_truth(3).unwrap();
    let (l, h) = (t.mode("light").unwrap(), t.mode("heavy").unwrap());
    assert!(l.center_hz < h.center_hz);
    assert_eq!(h.center_hz, 370e3);
    assert!(l.gamma_eff_hz > 100.0 * h.gamma_eff_hz);
    assert!((l.n_bar - 3.9).abs() < 0.02, "{}", l.n_bar);
}

#[test]
fn heterodyne_ratio_at_zero_detuning() {
    let mut sc = scenario();
    sc.modes = vec![light(1.0)];
    let t = sc.step_truth(3).unwrap();
    let m = t.mode("light").unwrap();
    let s = sc.synth_heterodyne(3, 0).unwrap();
    let (c, g, lo) = (m.center_hz, m.gamma_eff_hz, 9e3);
    let (a_s, a_a) = (m.n_bar + 1.0, m.n_bar);
    // mass of a Lorentzian centred at x0 between a and b
    let mass = |area: f64, x0: f64, a: f64, b: f64| {
        let h = 0.5 * g;
        area * (((b - x0) / h).atan() - ((a - x0) / h).atan()) / std::f64::consts::PI
    };
    let own = |center: f64, own_area: f64, other_center: f64, other_area: f64| {
        let r = s.index_range(center - 8e3, center + 8e3);
        let (fa, fb) = (s.frequency(r.start), s.frequency(r.end - 1));
        let v = &s.values[r];
        let trap = s.f_step * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]));
        let inside = mass(own_area, center, fa, fb);
        trap - mass(other_area, other_center, fa, fb) + (own_area - inside)
    };
    let up = own(c + lo, a_s, c - lo, a_a);
    let dn = own(c - lo, a_a, c + lo, a_s);
    let expected = (m.n_bar + 1.0) / m.n_bar;
    assert!((up / dn / expected - 1.0).abs() < 1e-6, "{}", up / dn);
    let reference = physics::sideband_ratio_from_n(3.87).unwrap();
    assert!((reference - 1.2585).abs() < 2e-4);
}

#[test]
fn heavy_twin_ratio_is_the_filter_ratio() {
    let mut sc = scenario();
    sc.modes = vec![heavy()];
    sc.drift = DetuningDrift::constant(w(30e3));
    let t = sc.step_truth(0).unwrap();
    assert_eq!(t.probe_detuning_hz[1], 30e3);
    let s = sc.synth_heterodyne(0, 1).unwrap();
    let up = trapezoid(&s, 379e3 - 4e3, 379e3 + 4e3);
    let dn = trapezoid(&s, 361e3 - 4e3, 361e3 + 4e3);
    let filter = physics::cavity_filter_ratio(w(30e3), w(370e3), w(1.4e6)).unwrap();
    assert!((up / dn / filter - 1.0).abs() < 2e-5);
    assert!((filter - 1.073).abs() < 5e-4);
}

#[test]
fn union_of_disjoint_mode_sets() {
    let mut a = scenario();
    a.modes = vec![light(1.0)];
    a.heterodyne_floor = LinearFloor { offset: 0.3, slope: 0.0 };
    let mut b = a.clone();
    b.modes = vec![heavy()];
    let both = scenario();
    let mut both = SynthScenario { heterodyne_floor: a.heterodyne_floor, ..both };
    both.modes = vec![light(1.0), heavy()];
    let sa = a.synth_heterodyne(1, 0).unwrap();
    let sb = b.synth_heterodyne(1, 0).unwrap();
    let su = both.synth_heterodyne(1, 0).unwrap();
    for i in 0..su.len() {
        let sum = sa.values[i] + sb.values[i] - 0.3;
        assert!((sum - su.values[i]).abs() <= 1e-12 * su.values[i].abs().max(1.0));
    }
}

#[test]
fn gamma_noise_statistics() {
    let mut sc = scenario();
    sc.grid = Grid::spanning(360e3, 380e3, 10_000).unwrap();
    sc.heterodyne_floor = LinearFloor { offset: 0.01, slope: 0.0 };
    let clean = sc.synth_heterodyne(0, 0).unwrap();
    for n in [1u32, 10, 1_000_000] {
        let mut c = clean.clone();
        c.averaging_count = n;
        let noisy = apply_measurement_noise(&c, 11, 3).unwrap();
        let ratios: Vec<f64> = noisy.values.iter().zip(&c.values).map(|(a, b)| a / b).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let bound = 5.0 / ((n as f64) * 1e4).sqrt();
        assert!((mean - 1.0).abs() < bound, "N={n}: {mean}");
        if n == 1_000_000 {
            assert!(ratios.iter().all(|r| (r - 1.0).abs() < 0.01));
        }
    }
    let a = apply_measurement_noise(&clean, 5, 9).unwrap();
    let b = apply_measurement_noise(&clean, 5, 9).unwrap();
    assert_eq!(a, b);
    let c = apply_measurement_noise(&clean, 5, 10).unwrap();
    assert_ne!(a.values, c.values);
}

#[test]
fn cooling_series_contents() {
    let sc = scenario();
    let series = cooling_series(&sc).unwrap();
    assert_eq!(series.len(), 4);
    assert!(series.iter().all(|s| s.heterodyne.len() == 3));
    // damping is linear through (0, Γm)
    let gm = 370e3 / 8.9e6;
    let slope = (series[3].truth.modes[0].gamma_eff_hz - gm) / series[3].power;
    for s in &series {
        let g = s.truth.modes[0].gamma_eff_hz;
        assert!((g - (gm + slope * s.power)).abs() < 1e-9 * g);
        let h = s.truth.mode("heavy").unwrap();
        assert_eq!((h.gamma_eff_hz, h.center_hz), (20.0, 370e3));
    }
}

#[test]
fn scenario_validation() {
    let mut sc = scenario();
    sc.cool_powers.push(0.0);
    assert!(sc.validate().is_err());
    let mut sc = scenario();
    sc.cool_detuning = w(700e3);
    assert!(sc.validate().is_err());
    let mut sc = scenario();
    sc.cool_powers.clear();
    assert!(cooling_series(&sc).is_err());
    let sc = scenario();
    assert!(sc.synth_homodyne(4).is_err());
    assert!(sc.synth_heterodyne(0, 3).is_err());
}

#[test]
fn drift_polynomial() {
    let d = DetuningDrift {
        coefficients: vec![1.0, 2.0, 3.0],
    };
    assert_eq!(d.eval(2.0), 1.0 + 4.0 + 12.0);
}
