//! CODATA 2018 values. The Boltzmann constant is exact in the revised SI.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    f_hz * TWO_PI
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}
