//! Integer-order Bessel functions of the first kind and their positive zeros.
//!
//! `J_m(x)` is evaluated with Miller's backward recurrence normalized by the
//! identity `J_0 + 2 Σ J_2k = 1`, which is stable for every order and
//! argument as long as the starting order sits well above both `m` and `x`.

use crate::error::{Error, Result};

const RESCALE_LIMIT: f64 = 1e250;
const ROOT_SCAN_STEP: f64 = 0.1;

fn start_order(m: u32, x: f64) -> u32 {
    let top = (m as f64).max(x);
    let n = top + 30.0 + 12.0 * top.sqrt();
    // even start keeps the normalization sum aligned with J_2k terms
    let n = n.ceil() as u32;
    n + (n & 1)
}

/// `J_m(x)` for integer `m ≥ 0` and any finite real `x`.
pub fn bessel_j(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let ax = x.abs();
    let value = bessel_j_nonneg(m, ax);
    if x < 0.0 && m % 2 == 1 {
        -value
    } else {
        value
    }
}

fn bessel_j_nonneg(m: u32, x: f64) -> f64 {
    let top = start_order(m, x);
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0_f64; // J_{k+1}
    let mut j_cur = 1e-300_f64; // J_k, arbitrary seed
    let mut target = 0.0;
    let mut norm = 0.0;
    let mut k = top;
    loop {
        if k == m {
            target = j_cur;
        }
        if k % 2 == 0 {
            norm += if k == 0 { j_cur } else { 2.0 * j_cur };
        }
        if k == 0 {
            break;
        }
        let j_prev = (k as f64) * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        k -= 1;
        if j_cur.abs() > RESCALE_LIMIT {
            let s = 1.0 / RESCALE_LIMIT;
            j_cur *= s;
            j_next *= s;
            target *= s;
            norm *= s;
        }
    }
    target / norm
}

/// Derivative `J_m'(x) = (J_{m-1}(x) − J_{m+1}(x)) / 2`, with `J_{-1} = −J_1`.
pub fn bessel_j_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -bessel_j(1, x)
    } else {
        0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x))
    }
}

/// The `n`-th positive zero of `J_m` (`n ≥ 1`), absolute accuracy well below 1e-9.
pub fn bessel_root(m: u32, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "root index starts at 1"));
    }
    if m > 200 || n > 1000 {
        return Err(Error::invalid(
            "m/n",
            format!("indices ({m},{n}) outside the supported range m <= 200, n <= 1000"),
        ));
    }
    // every positive zero of J_m lies above m, and J_m has no zero in (0, m]
    let mut a = if m == 0 { 0.5 } else { m as f64 };
    let mut fa = bessel_j(m, a);
    let mut found = 0;
    loop {
        let b = a + ROOT_SCAN_STEP;
        let fb = bessel_j(m, b);
        if fa == 0.0 {
            found += 1;
            if found == n {
                return Ok(a);
            }
        } else if fa * fb < 0.0 {
            found += 1;
            if found == n {
                return Ok(refine_root(m, a, b));
            }
        }
        a = b;
        fa = fb;
    }
}

fn refine_root(m: u32, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = bessel_j(m, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-13 * mid.max(1.0) {
            break;
        }
        let f_mid = bessel_j(m, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    // two Newton polishing steps, kept only while they stay inside the bracket
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let d = bessel_j_prime(m, x);
        if d == 0.0 {
            break;
        }
        let next = x - bessel_j(m, x) / d;
        if next < lo - 1e-12 || next > hi + 1e-12 {
            break;
        }
        x = next;
    }
    x
}

/// Largest `|J_m(x)|` on `[0, j_{m,1}]`, i.e. the antinode amplitude of the
/// drum modes of order `m`. `J_0` peaks at the origin; higher orders peak at
/// the first zero of `J_m'`.
pub fn bessel_peak_amplitude(m: u32) -> Result<f64> {
    if m == 0 {
        return Ok(1.0);
    }
    let first_zero = bessel_root(m, 1)?;
    let (mut lo, mut hi) = (1e-6, first_zero);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_j_prime(m, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(bessel_j(m, 0.5 * (lo + hi)).abs())
}
