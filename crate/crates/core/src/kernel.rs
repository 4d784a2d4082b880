//! One-sided higher-order kernels on [0, 1] and the boundary-aware KDE.

use crate::density::Dataset;
use crate::error::{domain, Error, Result};

pub const MAX_ORDER: usize = 8;

/// Polynomial kernel `K(u) = u^m (1-u)^m P(u)` on [0, 1], `deg P = order`, with unit
/// mass and vanishing moments `1..=order`.
///
/// `m = 0` is the minimal construction. `m = 1` makes `K` vanish at both ends, so
/// the termwise derivative of the estimate is its true derivative; the estimator
/// uses that shape.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderKernel {
    order: usize,
    boundary_power: usize,
    /// integer coefficients of the expanded `K`, lowest degree first
    exact: Vec<i128>,
    /// `derivs[k]` holds the coefficients of `K^(k)`
    derivs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum KernelShape {
    /// `K` is a bare polynomial on [0, 1]
    Minimal,
    /// `K = u (1-u) P(u)`, continuous on the real line
    #[default]
    Vanishing,
}

impl KernelShape {
    pub fn boundary_power(self) -> usize {
        match self {
            KernelShape::Minimal => 0,
            KernelShape::Vanishing => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frac {
    n: i128,
    d: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    fn new(n: i128, d: i128) -> Self {
        let g = gcd(n, d).max(1);
        let s = if d < 0 { -1 } else { 1 };
        Frac { n: s * n / g, d: s * d / g }
    }
    fn int(n: i128) -> Self {
        Frac { n, d: 1 }
    }
    fn sub(self, o: Frac) -> Frac {
        let g = gcd(self.d, o.d).max(1);
        Frac::new(self.n * (o.d / g) - o.n * (self.d / g), self.d / g * o.d)
    }
    fn mul(self, o: Frac) -> Frac {
        let g1 = gcd(self.n, o.d).max(1);
        let g2 = gcd(o.n, self.d).max(1);
        Frac::new((self.n / g1) * (o.n / g2), (self.d / g2) * (o.d / g1))
    }
    fn div(self, o: Frac) -> Frac {
        self.mul(Frac::new(o.d, o.n))
    }
}

/// `int_0^1 u^a (1-u)^m du = a! m! / (a + m + 1)!`
fn beta(a: usize, m: usize) -> Frac {
    let mut f = Frac::int(1);
    for k in 1..=m {
        f = f.mul(Frac::new(k as i128, (a + k) as i128));
    }
    f.mul(Frac::new(1, (a + m + 1) as i128))
}

fn binom(n: usize, k: usize) -> i128 {
    let mut r: i128 = 1;
    for i in 0..k {
        r = r * (n - i) as i128 / (i + 1) as i128;
    }
    r
}

fn solve_kernel(order: usize, m: usize) -> Vec<i128> {
    let n = order + 1;
    let mut a: Vec<Vec<Frac>> = (0..n)
        .map(|i| {
            let mut row: Vec<Frac> = (0..n).map(|j| beta(i + j + m, m)).collect();
            row.push(Frac::int(if i == 0 { 1 } else { 0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| a[r][c].n != 0).expect("moment matrix is nonsingular");
        a.swap(c, p);
        let piv = a[c][c];
        for j in c..=n {
            a[c][j] = a[c][j].div(piv);
        }
        for r in 0..n {
            if r != c && a[r][c].n != 0 {
                let f = a[r][c];
                for j in c..=n {
                    a[r][j] = a[r][j].sub(f.mul(a[c][j]));
                }
            }
        }
    }
    let poly: Vec<i128> = (0..n)
        .map(|j| {
            let v = a[j][n];
            assert_eq!(v.d, 1, "kernel coefficients are integers");
            v.n
        })
        .collect();
    // multiply by u^m (1-u)^m
    let mut weight = vec![0i128; 2 * m + 1];
    for k in 0..=m {
        weight[m + k] = binom(m, k) * if k % 2 == 0 { 1 } else { -1 };
    }
    let mut out = vec![0i128; order + 2 * m + 1];
    for (i, &p) in poly.iter().enumerate() {
        for (j, &w) in weight.iter().enumerate() {
            out[i + j] += p * w;
        }
    }
    out
}

fn build_kernel(order: usize, shape: KernelShape) -> Result<OrderKernel> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let m = shape.boundary_power();
    let exact = solve_kernel(order, m);
    let mut derivs = vec![exact.iter().map(|&a| a as f64).collect::<Vec<f64>>()];
    for k in 1..=order {
        let prev = &derivs[k - 1];
        let next: Vec<f64> = prev.iter().enumerate().skip(1).map(|(j, &a)| a * j as f64).collect();
        derivs.push(next);
    }
    Ok(OrderKernel { order, boundary_power: m, exact, derivs })
}

/// The minimal kernel: the degree-`order` polynomial solving the moment system.
pub fn build_order_kernel(order: usize) -> Result<OrderKernel> {
    build_kernel(order, KernelShape::Minimal)
}

/// Kernel of the given shape.
pub fn build_shaped_kernel(order: usize, shape: KernelShape) -> Result<OrderKernel> {
    build_kernel(order, shape)
}

impl OrderKernel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[i128] {
        &self.exact
    }

    pub fn boundary_power(&self) -> usize {
        self.boundary_power
    }

    /// `K^(k)(u)` on [0, 1], zero outside.
    #[inline]
    pub fn eval(&self, u: f64, k: usize) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        horner(&self.derivs[k], u)
    }

    /// `int_0^1 u^i K(u) du` as an exact fraction `(num, den)` in lowest terms.
    pub fn moment_exact(&self, i: usize) -> (i128, i128) {
        let mut acc = Frac::int(0);
        for (j, &a) in self.exact.iter().enumerate() {
            acc = acc.sub(Frac::new(-a, (i + j + 1) as i128));
        }
        (acc.n, acc.d)
    }

    /// `int_0^1 u^i K(u) du` in floating point.
    pub fn moment(&self, i: usize) -> f64 {
        let (n, d) = self.moment_exact(i);
        n as f64 / d as f64
    }

    /// `int_0^1 K^(k)(u)^2 du`.
    pub fn square_norm(&self, k: usize) -> f64 {
        let c = &self.derivs[k];
        let mut s = 0.0;
        for (i, a) in c.iter().enumerate() {
            for (j, b) in c.iter().enumerate() {
                s += a * b / (i + j + 1) as f64;
            }
        }
        s
    }
}

#[inline]
fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
}

/// Bandwidth `c_h * n^(-1/(2 alpha + 1))`.
pub fn default_bandwidth(n: usize, alpha: f64, c_h: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("bandwidth needs n >= 2, got {n}"));
    }
    Ok(c_h * (n as f64).powf(-1.0 / (2.0 * alpha + 1.0)))
}

/// Kernel density estimate reading data on one side of x: `[x - h, x]` for
/// `x >= 0` and `[x, x + h]` for `x < 0`.
#[derive(Debug, Clone)]
pub struct KdeModel {
    sorted: Vec<f64>,
    h: f64,
    kernel: OrderKernel,
    alpha: f64,
}

impl KdeModel {
    /// Estimator with the given bandwidth and the vanishing-boundary kernel.
    pub fn new(data: &Dataset, h: f64, alpha: f64) -> Result<Self> {
        Self::with_shape(data, h, alpha, KernelShape::Vanishing)
    }

    pub fn with_shape(data: &Dataset, h: f64, alpha: f64, shape: KernelShape) -> Result<Self> {
        if data.is_empty() {
            return domain("empty dataset");
        }
        if !(h > 0.0) {
            return domain(format!("bandwidth must be positive, got {h}"));
        }
        let kernel = build_shaped_kernel(alpha.floor() as usize, shape)?;
        let mut sorted = data.values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(KdeModel { sorted, h, kernel, alpha })
    }

    /// Fit with the default bandwidth rule.
    pub fn fit(data: &Dataset, alpha: f64, c_h: f64) -> Result<Self> {
        Self::fit_shape(data, alpha, c_h, KernelShape::Vanishing)
    }

    pub fn fit_shape(data: &Dataset, alpha: f64, c_h: f64, shape: KernelShape) -> Result<Self> {
        let h = if data.len() >= 2 { default_bandwidth(data.len(), alpha, c_h)? } else { c_h };
        Self::with_shape(data, h, alpha, shape)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kernel(&self) -> &OrderKernel {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_data(&self) -> &[f64] {
        &self.sorted
    }

    #[inline]
    fn term(&self, x: f64, mu: f64, k: usize) -> Option<f64> {
        let (u, sign) = if x >= 0.0 { ((x - mu) / self.h, 1.0) } else { ((mu - x) / self.h, -1.0) };
        if (0.0..=1.0).contains(&u) {
            let v = self.kernel.eval(u, k);
            Some(if k % 2 == 1 { sign * v } else { v })
        } else {
            None
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if k > self.kernel.order {
            return Err(Error::UnsupportedDerivative { k, order: self.kernel.order });
        }
        Ok(())
    }

    #[inline]
    fn scale(&self, k: usize) -> f64 {
        1.0 / (self.sorted.len() as f64 * self.h.powi(k as i32 + 1))
    }

    /// `f^(k)(x)` summing over every datum.
    pub fn eval_naive(&self, x: f64, k: usize) -> Result<f64> {
        self.check(k)?;
        let s: f64 = self.sorted.iter().filter_map(|&mu| self.term(x, mu, k)).sum();
        Ok(s * self.scale(k))
    }

    /// `f^(k)(x)` summing only over the sorted window; bitwise equal to `eval_naive`.
    pub fn eval(&self, x: f64, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.eval_unchecked(x, k))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64, k: usize) -> f64 {
        let (lo, hi) = if x >= 0.0 { (x - self.h, x) } else { (x, x + self.h) };
        let slack = 1e-9 * self.h;
        let a = self.sorted.partition_point(|&m| m < lo - slack);
        let b = self.sorted.partition_point(|&m| m <= hi + slack);
        let s: f64 = self.sorted[a..b].iter().filter_map(|&mu| self.term(x, mu, k)).sum();
        s * self.scale(k)
    }

    /// Grid proxy for `min f >= c_d / 2` on [-1, 1].
    pub fn omega_event(&self, c_d: f64, grid: usize) -> bool {
        let grid = grid.max(2);
        (0..grid).all(|i| {
            let x = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
            self.eval_unchecked(x, 0) >= 0.5 * c_d
        })
    }
}

pub fn omega_event(model: &KdeModel, c_d: f64) -> bool {
    model.omega_event(c_d, 2048)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(build_order_kernel(0).unwrap().coefficients(), &[1]);
        assert_eq!(build_order_kernel(1).unwrap().coefficients(), &[4, -6]);
        assert_eq!(build_order_kernel(2).unwrap().coefficients(), &[9, -36, 30]);
        assert_eq!(build_order_kernel(9).unwrap_err(), Error::UnsupportedOrder(9));
    }

    #[test]
    fn moments_exact_for_all_orders() {
        for shape in [KernelShape::Minimal, KernelShape::Vanishing] {
            for order in 0..=MAX_ORDER {
                let k = build_shaped_kernel(order, shape).unwrap();
                assert_eq!(k.moment_exact(0), (1, 1));
                for i in 1..=order {
                    assert_eq!(k.moment_exact(i).0, 0, "order {order} moment {i}");
                    assert!(k.moment(i).abs() < 1e-12);
                }
                assert_ne!(k.moment_exact(order + 1).0, 0);
            }
        }
    }

    #[test]
    fn vanishing_kernels() {
        let k = build_shaped_kernel(1, KernelShape::Vanishing).unwrap();
        assert_eq!(k.coefficients(), &[0, 36, -96, 60]);
        let k = build_shaped_kernel(2, KernelShape::Vanishing).unwrap();
        assert_eq!(k.coefficients(), &[0, 120, -600, 900, -420]);
        assert_eq!(k.eval(0.0, 0), 0.0);
        assert!(k.eval(1.0, 0).abs() < 1e-9);
        assert!((k.square_norm(1) - 1200.0).abs() < 1e-9);
    }

    #[test]
    fn solves_moment_system_numerically() {
        for order in 0..=4 {
            let n = order + 1;
            let mut a = vec![vec![0.0; n + 1]; n];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = 1.0 / (i + j + 1) as f64;
                }
                a[i][n] = if i == 0 { 1.0 } else { 0.0 };
            }
            for c in 0..n {
                let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
                a.swap(c, p);
                for r in 0..n {
                    if r != c {
                        let f = a[r][c] / a[c][c];
                        for j in c..=n {
                            a[r][j] -= f * a[c][j];
                        }
                    }
                }
            }
            let k = build_order_kernel(order).unwrap();
            for j in 0..n {
                let sol = a[j][n] / a[j][j];
                assert!((sol - k.coefficients()[j] as f64).abs() < 1e-8 * (1.0 + sol.abs()));
            }
        }
    }

    #[test]
    fn kernel_norms() {
        let k = build_order_kernel(2).unwrap();
        assert!((k.square_norm(0) - 9.0).abs() < 1e-12);
        assert!((k.square_norm(1) - 336.0).abs() < 1e-12);
    }

    #[test]
    fn single_term_example() {
        let m = KdeModel::with_shape(&Dataset::new(vec![0.5], 0), 0.2, 1.0, KernelShape::Minimal).unwrap();
        assert_eq!(m.eval(0.5, 0).unwrap(), 20.0);
        assert_eq!(m.eval(0.8, 0).unwrap(), 0.0);
        assert_eq!(m.eval(0.5, 2).unwrap_err(), Error::UnsupportedDerivative { k: 2, order: 1 });
    }

    #[test]
    fn bandwidth_examples() {
        assert!((default_bandwidth(4096, 2.0, 1.0).unwrap() - 0.189_464_571_8).abs() < 1e-9);
        assert!(default_bandwidth(1, 2.0, 1.0).is_err());
        assert!(default_bandwidth(2000, 2.0, 1.0).unwrap() < default_bandwidth(1000, 2.0, 1.0).unwrap());
    }

    #[test]
    fn one_sided_windows() {
        let m = KdeModel::new(&Dataset::new(vec![-0.55, -0.35, 0.25, 0.45], 0), 0.2, 2.0).unwrap();
        // x = 0.4 reads [0.2, 0.4] only; x = -0.4 reads [-0.4, -0.2] only
        let only = KdeModel::new(&Dataset::new(vec![0.25], 0), 0.2, 2.0).unwrap();
        assert_eq!(m.eval(0.4, 0).unwrap() * 4.0, only.eval(0.4, 0).unwrap());
        let only = KdeModel::new(&Dataset::new(vec![-0.35], 0), 0.2, 2.0).unwrap();
        assert_eq!(m.eval(-0.4, 1).unwrap() * 4.0, only.eval(-0.4, 1).unwrap());
    }
}
