//! Test densities on [-1, 1] with exact evaluation, CDF and rejection sampling.

use crate::bump;
use crate::error::{domain, Error, Result};
use crate::gaussian::{C_D_LOWER, C_D_UPPER};
use crate::quadrature::integrate;
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default Hölder constant.
pub const HOLDER_L: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityKind {
    Uniform,
    BumpPerturbed,
    TwoPointLinear,
}

/// Plain description of a test density, round-trippable through the config format.
///
/// For `BumpPerturbed`, explicit `centers` with matching `signs` give bumps
/// `eps^alpha * sign * w((mu - c) / rho)`. With no centers, `levels` dyadic
/// layers tile the interval: layer `k` has width `rho 2^-k`, amplitude
/// `(eps 2^-k)^alpha` and random signs drawn from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub kind: DensityKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub centers: Vec<f64>,
    #[serde(default)]
    pub signs: Vec<i8>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    2.0
}
fn default_rho() -> f64 {
    0.5
}
fn default_levels() -> usize {
    1
}

impl DensitySpec {
    pub fn uniform() -> Self {
        DensitySpec {
            kind: DensityKind::Uniform,
            alpha: 2.0,
            eps: 0.0,
            rho: 0.5,
            centers: vec![],
            signs: vec![],
            levels: 1,
            seed: 0,
        }
    }

    pub fn single_bump(alpha: f64, eps: f64, rho: f64, center: f64) -> Self {
        DensitySpec {
            kind: DensityKind::BumpPerturbed,
            alpha,
            eps,
            rho,
            centers: vec![center],
            signs: vec![1],
            levels: 1,
            seed: 0,
        }
    }

    pub fn multiscale(alpha: f64, eps: f64, rho: f64, levels: usize, seed: u64) -> Self {
        DensitySpec {
            kind: DensityKind::BumpPerturbed,
            alpha,
            eps,
            rho,
            centers: vec![],
            signs: vec![],
            levels,
            seed,
        }
    }

    pub fn linear(alpha: f64, eps: f64, rho: f64) -> Self {
        DensitySpec {
            kind: DensityKind::TwoPointLinear,
            alpha,
            eps,
            rho,
            centers: vec![],
            signs: vec![],
            levels: 1,
            seed: 0,
        }
    }
}

/// One term `coef * w((mu - center) / width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub coef: f64,
}

impl Bump {
    #[inline]
    pub fn value(&self, mu: f64) -> f64 {
        self.coef * bump::w((mu - self.center) / self.width)
    }

    #[inline]
    pub fn deriv(&self, mu: f64) -> f64 {
        self.coef / self.width * bump::w1((mu - self.center) / self.width)
    }

    #[inline]
    pub fn deriv2(&self, mu: f64) -> f64 {
        self.coef / (self.width * self.width) * bump::w2((mu - self.center) / self.width)
    }

    pub fn lo(&self) -> f64 {
        self.center - self.width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.width
    }
}

/// A density in the test family, immutable after construction.
#[derive(Debug, Clone)]
pub struct AnalyticDensity {
    spec: DensitySpec,
    /// sorted by left edge
    bumps: Vec<Bump>,
    slope: f64,
    envelope: f64,
    max_bump_width: f64,
    min_bump_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport {
    pub order: usize,
    pub exponent: f64,
    /// largest observed `|f^(k)(x) - f^(k)(y)| / |x - y|^exponent`
    pub constant: f64,
    pub holds: bool,
}

/// `n` draws plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(values: Vec<f64>, seed: u64) -> Self {
        Dataset { values, seed }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AnalyticDensity {
    pub fn uniform() -> Self {
        Self::new(DensitySpec::uniform()).expect("uniform is valid")
    }

    pub fn new(spec: DensitySpec) -> Result<Self> {
        if !(spec.alpha > 0.0) {
            return Err(construction("alpha must be positive"));
        }
        let mut bumps = Vec::new();
        let mut slope = 0.0;
        match spec.kind {
            DensityKind::Uniform => {}
            DensityKind::TwoPointLinear => {
                if !(spec.rho > 0.0) || spec.eps < 0.0 {
                    return Err(construction("TwoPointLinear needs rho > 0 and eps >= 0"));
                }
                slope = spec.eps.powf(spec.alpha) / spec.rho;
            }
            DensityKind::BumpPerturbed => {
                if !(spec.rho > 0.0) || spec.eps < 0.0 {
                    return Err(construction("BumpPerturbed needs rho > 0 and eps >= 0"));
                }
                if spec.centers.is_empty() {
                    bumps = multiscale_bumps(&spec)?;
                } else {
                    if spec.signs.len() != spec.centers.len() {
                        return Err(construction(format!(
                            "{} centers but {} signs",
                            spec.centers.len(),
                            spec.signs.len()
                        )));
                    }
                    let amp = spec.eps.powf(spec.alpha);
                    for (&c, &b) in spec.centers.iter().zip(&spec.signs) {
                        if !(-1..=1).contains(&b) {
                            return Err(construction(format!("sign {b} is not in {{-1, 0, 1}}")));
                        }
                        if b != 0 {
                            bumps.push(Bump { center: c, width: spec.rho, coef: amp * b as f64 });
                        }
                    }
                }
                for b in &bumps {
                    if b.lo() < -1.0 - 1e-12 || b.hi() > 1.0 + 1e-12 {
                        return Err(construction(format!(
                            "bump at {} with width {} leaves [-1, 1]",
                            b.center, b.width
                        )));
                    }
                }
            }
        }
        bumps.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
        let max_bump_width = bumps.iter().map(|b| b.width).fold(0.0, f64::max);
        let min_bump_width = bumps.iter().map(|b| b.width).fold(f64::INFINITY, f64::min);
        let mut d = AnalyticDensity { spec, bumps, slope, envelope: 0.0, max_bump_width, min_bump_width };
        let b = d.bounds();
        if b.min < C_D_LOWER || b.max > C_D_UPPER {
            return Err(construction(format!(
                "density range [{:.4}, {:.4}] violates [{C_D_LOWER}, {C_D_UPPER}]",
                b.min, b.max
            )));
        }
        d.envelope = 1.01 * b.max;
        let mass = d.total_mass()?;
        if (mass - 1.0).abs() > 1e-10 {
            return Err(construction(format!("density integrates to {mass}")));
        }
        Ok(d)
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn kind(&self) -> DensityKind {
        self.spec.kind
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    /// Coefficient of the linear term (TwoPointLinear only).
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// Smallest length scale of the density, used to size quadrature panels.
    pub fn length_scale(&self) -> f64 {
        if self.bumps.is_empty() {
            1.0
        } else {
            self.min_bump_width
        }
    }

    /// Bumps whose support meets `[a, b]`.
    pub fn bumps_in(&self, a: f64, b: f64) -> impl Iterator<Item = &Bump> {
        let start = self.bumps.partition_point(|bp| bp.lo() < a - 2.0 * self.max_bump_width);
        self.bumps[start..].iter().take_while(move |bp| bp.lo() <= b).filter(move |bp| bp.hi() >= a)
    }

    /// Grid size used for range checks and the sampling envelope.
    pub fn grid_size(&self) -> usize {
        if self.bumps.is_empty() {
            4096
        } else {
            4096.max((8.0 / self.min_bump_width).ceil() as usize)
        }
    }

    /// `f(x)`, zero outside [-1, 1].
    pub fn eval(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        0.5 + self.slope * x + self.bumps_in(x, x).map(|b| b.value(x)).sum::<f64>()
    }

    /// `f'(x)` on [-1, 1].
    pub fn deriv(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.slope + self.bumps_in(x, x).map(|b| b.deriv(x)).sum::<f64>()
    }

    /// `f''(x)` on [-1, 1].
    pub fn deriv2(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.bumps_in(x, x).map(|b| b.deriv2(x)).sum::<f64>()
    }

    /// `f^(k)(x)`: analytic up to k = 2, central differences of `f''` beyond.
    pub fn derivative(&self, x: f64, k: usize) -> f64 {
        match k {
            0 => self.eval(x),
            1 => self.deriv(x),
            2 => self.deriv2(x),
            _ => {
                let h = 1e-3 * self.length_scale();
                (self.derivative(x + h, k - 1) - self.derivative(x - h, k - 1)) / (2.0 * h)
            }
        }
    }

    /// Exact CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let mut v = 0.5 * (x + 1.0) + 0.5 * self.slope * (x * x - 1.0);
        for b in self.bumps_in(-1.0, x) {
            v += b.coef * b.width * bump::w_integral(((x - b.center) / b.width).min(1.0));
        }
        v.clamp(0.0, 1.0)
    }

    /// Min and max of f over a uniform grid on [-1, 1].
    pub fn bounds(&self) -> Bounds {
        let n = self.grid_size();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let v = self.eval(x);
            min = min.min(v);
            max = max.max(v);
        }
        Bounds { min, max }
    }

    /// `int f` over [-1, 1] by adaptive quadrature.
    pub fn total_mass(&self) -> Result<f64> {
        let mut br = vec![-1.0, 0.0, 1.0];
        for b in &self.bumps {
            br.extend([b.lo(), b.center, b.hi()]);
        }
        br.sort_by(f64::total_cmp);
        br.dedup();
        Ok(integrate(|mu| self.eval(mu), &br, 1e-13, 0.0)?.value)
    }

    /// Numeric Hölder check of `f^(floor alpha)` with constant `l`.
    pub fn holder_check(&self, l: f64) -> HolderReport {
        let order = self.spec.alpha.floor() as usize;
        let exponent = self.spec.alpha - order as f64;
        let n = self.grid_size().min(1 << 16);
        let grid: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| self.derivative(x, order)).collect();
        let constant = if exponent == 0.0 {
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            max - min
        } else {
            let mut c: f64 = 0.0;
            let mut lag = 1;
            while lag < n {
                let dx = grid[lag] - grid[0];
                let scale = dx.powf(exponent);
                for i in 0..n - lag {
                    c = c.max((vals[i + lag] - vals[i]).abs() / scale);
                }
                lag *= 2;
            }
            c
        };
        HolderReport { order, exponent, constant, holds: constant <= l }
    }

    /// Membership in the parameter class: density bounds and the Hölder condition.
    pub fn check_membership(&self, l: f64) -> Result<HolderReport> {
        let b = self.bounds();
        if b.min < C_D_LOWER || b.max > C_D_UPPER {
            return Err(construction(format!("density range [{}, {}] out of bounds", b.min, b.max)));
        }
        let h = self.holder_check(l);
        if !h.holds {
            return Err(construction(format!(
                "Hölder constant {:.4} of derivative {} exceeds {l}",
                h.constant, h.order
            )));
        }
        Ok(h)
    }

    /// `n` draws by rejection from the Uniform[-1, 1] proposal.
    /// Inverse cdf by bisection on [-1, 1].
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return domain(format!("quantile level {q} outside [0, 1]"));
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = seed::rng(seed);
        let mut values = Vec::with_capacity(n);
        while values.len() < n {
            let x: f64 = rng.random_range(-1.0..=1.0);
            let u: f64 = rng.random::<f64>() * self.envelope;
            if u <= self.eval(x) {
                values.push(x);
            }
        }
        Dataset { values, seed }
    }
}

fn construction(msg: impl Into<String>) -> Error {
    Error::Construction(msg.into())
}

fn multiscale_bumps(spec: &DensitySpec) -> Result<Vec<Bump>> {
    if spec.levels == 0 {
        return Err(construction("multiscale layout needs at least one level"));
    }
    let mut rng = seed::rng(spec.seed);
    let mut out = Vec::new();
    for k in 0..spec.levels {
        let r = spec.rho * 0.5f64.powi(k as i32);
        let amp = (spec.eps * 0.5f64.powi(k as i32)).powf(spec.alpha);
        let count = (1.0 / r).floor() as usize;
        if count == 0 {
            return Err(construction(format!("width {r} does not fit in [-1, 1]")));
        }
        let start = -(count as f64) * r;
        for i in 0..count {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            out.push(Bump { center: start + r * (2 * i + 1) as f64, width: r, coef: amp * sign });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let u = AnalyticDensity::uniform();
        assert_eq!(u.eval(0.0), 0.5);
        assert_eq!(u.eval(1.5), 0.0);
        let b = AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.3, 0.5, 0.0)).unwrap();
        assert_eq!(b.eval(0.0), 0.5 + 0.3f64.powi(2) * bump::w(0.0));
        assert!((b.eval(-0.2) - (0.5 + 0.09 * bump::w(-0.4))).abs() < 1e-15);
    }

    #[test]
    fn cdf_examples() {
        let u = AnalyticDensity::uniform();
        assert_eq!(u.cdf(0.0), 0.5);
        let b = AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.3, 0.5, 0.1)).unwrap();
        assert!((b.cdf(1.0) - 1.0).abs() < 1e-10);
        assert!((b.cdf(1.0 - 1e-12) - 1.0).abs() < 1e-10);
        for &x in &[-0.7f64, -0.2, 0.05, 0.33, 0.8] {
            let mut br = vec![-1.0];
            br.extend([-0.4, 0.1, 0.6].into_iter().filter(|&c| c < x));
            br.push(x);
            let q = integrate(|m| b.eval(m), &br, 1e-13, 0.0).unwrap().value;
            assert!((b.cdf(x) - q).abs() < 1e-10, "{x}");
            let h = 1e-5;
            let fd = (b.cdf(x + h) - b.cdf(x - h)) / (2.0 * h);
            assert!((fd - b.eval(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_density() {
        let d = AnalyticDensity::new(DensitySpec::linear(2.0, 0.3, 0.5)).unwrap();
        assert!((d.eval(0.5) - (0.5 + 0.18 * 0.5)).abs() < 1e-15);
        assert!((d.cdf(0.0) - (0.5 - 0.09)).abs() < 1e-15);
        assert!(AnalyticDensity::new(DensitySpec::linear(1.0, 0.4, 0.5)).is_err());
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.3, 0.5, 0.8)).is_err());
        assert!(AnalyticDensity::new(DensitySpec::single_bump(1.0, 0.9, 0.5, 0.0)).is_err());
        let mut s = DensitySpec::single_bump(2.0, 0.3, 0.5, 0.0);
        s.signs.clear();
        assert!(AnalyticDensity::new(s).is_err());
    }

    #[test]
    fn multiscale_layout() {
        let d = AnalyticDensity::new(DensitySpec::multiscale(0.5, 0.0064, 0.25, 6, 3)).unwrap();
        assert_eq!(d.bumps().len(), 4 + 8 + 16 + 32 + 64 + 128);
        let h = d.holder_check(HOLDER_L);
        assert!(h.holds, "{h:?}");
        assert!((d.total_mass().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_supported() {
        let d = AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.3, 0.5, 0.0)).unwrap();
        let a = d.sample(1000, 42);
        let b = d.sample(1000, 42);
        assert_eq!(a, b);
        assert!(a.values.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_ne!(a.values, d.sample(1000, 43).values);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let s = DensitySpec::single_bump(2.0, 0.3, 0.5, 0.0);
        let text = toml::to_string(&s).unwrap();
        let back: DensitySpec = toml::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
