//! Gaussian primitives for the variance-exploding heat kernel.
//!
//! `phi`, `phi_deriv`, `unit_mass` and friends are the unchecked hot-path
//! versions; the `gaussian_*` functions validate their arguments.

use crate::error::{domain, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Default lower density bound.
pub const C_D_LOWER: f64 = 0.2;
/// Default upper density bound.
pub const C_D_UPPER: f64 = 5.0;

#[inline]
pub fn phi(x: f64, t: f64) -> f64 {
    (-x * x / (2.0 * t) - 0.5 * t.ln() - LN_SQRT_2PI).exp()
}

#[inline]
pub fn log_phi(x: f64, t: f64) -> f64 {
    -x * x / (2.0 * t) - 0.5 * t.ln() - LN_SQRT_2PI
}

#[inline]
pub fn phi_deriv(x: f64, t: f64) -> f64 {
    -(x / t) * phi(x, t)
}

/// Upper tail `P{Z >= z}` of the standard normal.
#[inline]
pub fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `P{Z <= z}`.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    upper_tail(-z)
}

/// Mills ratio `Q(z) / phi_1(z)`, finite for every z above about -37.
pub fn mills_ratio(z: f64) -> f64 {
    if z < 3.0 {
        upper_tail(z) * (2.0 * PI).sqrt() * (0.5 * z * z).exp()
    } else {
        // Laplace continued fraction, full precision from z = 3 at this depth
        let mut acc = z;
        for k in (1..=60).rev() {
            acc = z + k as f64 / acc;
        }
        1.0 / acc
    }
}

/// `Phi(u) - Phi(v)` for `u >= v`, with whichever tail formula keeps precision.
#[inline]
fn cdf_diff(u: f64, v: f64) -> f64 {
    if v >= 0.0 {
        upper_tail(v) - upper_tail(u)
    } else if u <= 0.0 {
        upper_tail(-u) - upper_tail(-v)
    } else {
        1.0 - upper_tail(u) - upper_tail(-v)
    }
}

/// Unchecked `int_a^b phi_t(x - mu) dmu`.
#[inline]
pub fn interval_mass_raw(a: f64, b: f64, x: f64, t: f64) -> f64 {
    let s = t.sqrt();
    cdf_diff((x - a) / s, (x - b) / s).clamp(0.0, 1.0)
}

/// Unchecked mass of `[-1, 1]` under `N(x, t)`.
#[inline]
pub fn unit_mass(x: f64, t: f64) -> f64 {
    interval_mass_raw(-1.0, 1.0, x.abs(), t)
}

/// `dist(x, [-1, 1])`.
#[inline]
pub fn support_dist(x: f64) -> f64 {
    (x.abs() - 1.0).max(0.0)
}

/// Exponent shift `d^2 / (2t)` with `d = dist(x, [-1,1])`, used to keep far-tail ratios finite.
#[inline]
pub fn support_shift(x: f64, t: f64) -> f64 {
    let d = support_dist(x);
    d * d / (2.0 * t)
}

/// `phi_t(y) * exp(d^2 / (2t))`, with the exponent formed as `(y - d)(y + d)` to avoid cancellation.
#[inline]
pub fn phi_shifted(y: f64, t: f64, d: f64) -> f64 {
    (-(y - d) * (y + d) / (2.0 * t) - 0.5 * t.ln() - LN_SQRT_2PI).exp()
}

/// `unit_mass(x, t) * exp(support_shift(x, t))`.
pub fn unit_mass_shifted(x: f64, t: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        return unit_mass(x, t);
    }
    let s = t.sqrt();
    let z1 = (ax - 1.0) / s;
    let z2 = (ax + 1.0) / s;
    INV_SQRT_2PI * (mills_ratio(z1) - mills_ratio(z2) * (-2.0 * ax / t).exp())
}

/// Closed-form score of the Uniform[-1,1] density smoothed at level t.
pub fn uniform_score(x: f64, t: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        let m = unit_mass(x, t);
        return (phi(x + 1.0, t) - phi(x - 1.0, t)) / m;
    }
    let s = t.sqrt();
    let z1 = (ax - 1.0) / s;
    let z2 = (ax + 1.0) / s;
    let e = (-2.0 * ax / t).exp();
    let v = (e - 1.0) / (s * (mills_ratio(z1) - mills_ratio(z2) * e));
    if x > 0.0 {
        v
    } else {
        -v
    }
}

/// `P{Z >= (x+1)/sqrt t} / P{Z >= (x-1)/sqrt t}`.
pub fn tail_ratio(x: f64, t: f64) -> f64 {
    let s = t.sqrt();
    let z1 = (x - 1.0) / s;
    let z2 = (x + 1.0) / s;
    if z1 < 0.0 {
        return upper_tail(z2) / upper_tail(z1);
    }
    mills_ratio(z2) / mills_ratio(z1) * (-2.0 * x / t).exp()
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        domain(format!("noise scale must be positive and finite, got {t}"))
    }
}

pub fn gaussian_pdf(x: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(phi(x, t))
}

pub fn gaussian_pdf_deriv(x: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(phi_deriv(x, t))
}

pub fn interval_mass(a: f64, b: f64, x: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !(a <= b) {
        return domain(format!("interval endpoints out of order: {a} > {b}"));
    }
    Ok(interval_mass_raw(a, b, x, t))
}

/// `eps(x, t) = c_d * mass of [-1,1] under N(x, t)`.
pub fn regularizer(x: f64, t: f64, c_d: f64) -> Result<f64> {
    check_t(t)?;
    if !(c_d > 0.0) {
        return domain(format!("c_d must be positive, got {c_d}"));
    }
    Ok(c_d * unit_mass(x, t))
}
