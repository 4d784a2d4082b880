//! The bump shape `w`: the derivative of the standard mollifier
//! `exp(-1/(1-u^2))`, scaled so that `sup |w| = 1`.

use crate::quadrature::integrate;
use std::sync::OnceLock;

/// Location of the maximum of `|psi'|`, the positive root of `6u^4 = 2`.
fn argmax() -> f64 {
    3.0f64.powf(-0.25)
}

#[inline]
fn mollifier(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

// derivatives of g(u) = -1/(1-u^2)
#[inline]
fn g_derivs(u: f64) -> (f64, f64, f64) {
    let q = 1.0 - u * u;
    let g1 = -2.0 * u / (q * q);
    let g2 = -2.0 / (q * q) - 8.0 * u * u / (q * q * q);
    let g3 = -24.0 * u / (q * q * q) - 48.0 * u * u * u / (q * q * q * q);
    (g1, g2, g3)
}

fn scale() -> f64 {
    static S: OnceLock<f64> = OnceLock::new();
    *S.get_or_init(|| {
        let u = argmax();
        (mollifier(u) * g_derivs(u).0).abs()
    })
}

/// `w(u)`; zero outside (-1, 1).
#[inline]
pub fn w(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    mollifier(u) * g_derivs(u).0 / scale()
}

/// `w'(u)`.
#[inline]
pub fn w1(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let (g1, g2, _) = g_derivs(u);
    mollifier(u) * (g2 + g1 * g1) / scale()
}

/// `w''(u)`.
#[inline]
pub fn w2(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let (g1, g2, g3) = g_derivs(u);
    mollifier(u) * (g3 + 3.0 * g1 * g2 + g1 * g1 * g1) / scale()
}

/// `w` and its first two derivatives in one pass.
#[inline]
pub fn w_all(u: f64) -> (f64, f64, f64) {
    if u.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let m = mollifier(u) / scale();
    let (g1, g2, g3) = g_derivs(u);
    (m * g1, m * (g2 + g1 * g1), m * (g3 + 3.0 * g1 * g2 + g1 * g1 * g1))
}

/// Antiderivative `int_{-1}^u w`, which is the scaled mollifier itself.
#[inline]
pub fn w_integral(u: f64) -> f64 {
    mollifier(u) / scale()
}

#[derive(Debug, Clone, Copy)]
pub struct BumpNorms {
    /// `||w||_2^2`
    pub w: f64,
    /// `||w'||_2^2`
    pub w1: f64,
    /// `||w''||_2^2`
    pub w2: f64,
    pub sup_w1: f64,
    pub sup_w2: f64,
}

pub fn norms() -> &'static BumpNorms {
    static N: OnceLock<BumpNorms> = OnceLock::new();
    N.get_or_init(|| {
        let br: Vec<f64> = (0..=64).map(|i| -1.0 + i as f64 / 32.0).collect();
        let sq = |f: fn(f64) -> f64| integrate(|u| f(u).powi(2), &br, 1e-14, 0.0).expect("bump norm").value;
        let sup = |f: fn(f64) -> f64| (0..=20000).map(|i| f(-1.0 + i as f64 / 10000.0).abs()).fold(0.0, f64::max);
        BumpNorms { w: sq(w), w1: sq(w1), w2: sq(w2), sup_w1: sup(w1), sup_w2: sup(w2) }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_normalized_and_mean_zero() {
        assert_eq!(w(0.0), 0.0);
        assert!((w(-argmax()).abs() - 1.0).abs() < 1e-15);
        for i in 1..100 {
            let u = i as f64 / 100.0;
            assert_eq!(w(u), -w(-u));
            assert!(w(u).abs() <= 1.0 + 1e-15);
        }
        let m = integrate(w, &[-1.0, -0.5, 0.0, 0.5, 1.0], 1e-13, 0.0).unwrap().value;
        assert!(m.abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for &u in &[-0.8, -0.3, 0.1, 0.55, 0.9] {
            let fd1 = (w(u + h) - w(u - h)) / (2.0 * h);
            let fd2 = (w1(u + h) - w1(u - h)) / (2.0 * h);
            assert!((fd1 - w1(u)).abs() < 1e-7 * (1.0 + w1(u).abs()));
            assert!((fd2 - w2(u)).abs() < 1e-6 * (1.0 + w2(u).abs()));
            let fdi = (w_integral(u + h) - w_integral(u - h)) / (2.0 * h);
            assert!((fdi - w(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn norms_positive() {
        let n = norms();
        assert!(n.w > 0.0 && n.w1 > n.w && n.w2 > 0.0);
    }
}
