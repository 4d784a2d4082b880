//! Gauss-Legendre panels and adaptive Gauss-Kronrod integration.

use crate::error::{Error, Result};
use gauss_quad::legendre::GaussLegendre;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

/// Nodes per Gauss-Legendre panel used throughout the crate.
pub const GL_NODES: usize = 16;

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gl_rule(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("rule size must be positive"));
    let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub fn gl16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gl_rule(GL_NODES))
}

/// Composite rule over `[a, b]` split at `breaks`, each piece cut into panels no wider than `width`.
#[derive(Debug, Clone, Default)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PanelRule {
    pub fn new(a: f64, b: f64, width: f64, breaks: &[f64]) -> Self {
        let mut cuts = vec![a];
        let mut inner: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
        inner.sort_by(f64::total_cmp);
        cuts.extend(inner);
        cuts.push(b);
        let rule = gl16();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let k = ((hi - lo) / width).ceil().max(1.0) as usize;
            let step = (hi - lo) / k as f64;
            for p in 0..k {
                let l = lo + p as f64 * step;
                let half = 0.5 * step;
                let mid = l + half;
                for &(x, wt) in rule {
                    nodes.push(mid + half * x);
                    weights.push(half * wt);
                }
            }
        }
        PanelRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Composite 16-point Gauss-Legendre over `[a, b]` with panels no wider than `width`.
pub fn composite_gl(f: impl FnMut(f64) -> f64, a: f64, b: f64, width: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    PanelRule::new(a, b, width, &[]).integrate(f)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut abs_k = k.abs();
    let mut fv = [(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[j] = (f1, f2);
        k += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * k;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[j].0 - mean).abs() + (fv[j].1 - mean).abs());
    }
    let result = k * h;
    let asc = asc * h.abs();
    let mut err = ((k - g) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (1.0f64).min((200.0 * err / asc).powf(1.5));
    }
    let floor = 50.0 * f64::EPSILON * abs_k * h.abs();
    (result, err, floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    floor: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Global adaptive Gauss-Kronrod (7/15) integration over consecutive `breaks`.
pub fn integrate(f: impl FnMut(f64) -> f64, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> Result<Integral> {
    integrate_limited(f, breaks, rel_tol, abs_tol, 200_000)
}

pub fn integrate_limited(
    mut f: impl FnMut(f64) -> f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    if breaks.len() < 2 {
        return Err(Error::Numeric("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e, r) = gk15(&mut f, w[0], w[1]);
        evals += 15;
        total += v;
        total_err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e, floor: r });
    }
    if !total.is_finite() || !total_err.is_finite() {
        return Err(Error::Numeric(format!("non-finite integrand on [{}, {}]", breaks[0], breaks[breaks.len() - 1])));
    }
    let rel_tol = rel_tol.max(100.0 * f64::EPSILON);
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_intervals {
            return Err(Error::Numeric(format!(
                "adaptive quadrature did not converge: value {total:e}, error estimate {total_err:e}, {} intervals, {evals} evaluations",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Numeric(format!(
                "interval [{}, {}] cannot be bisected further; value {total:e}, error estimate {total_err:e}",
                worst.a, worst.b
            )));
        }
        let (v1, e1, r1) = gk15(&mut f, worst.a, mid);
        let (v2, e2, r2) = gk15(&mut f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1, floor: r1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2, floor: r2 });
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Numeric(format!("non-finite integrand near [{}, {}]", worst.a, worst.b)));
        }
    }
    // recompute the sum to shed accumulated rounding from the running updates
    let mut value = 0.0;
    let mut error = 0.0;
    let intervals = heap.len();
    for p in heap.into_iter() {
        value += p.value;
        error += p.error.max(p.floor);
    }
    Ok(Integral { value, error, evals, intervals })
}

/// Breakpoints from `a` to `b` spaced at most `width` apart, merged with `extra`.
pub fn breakpoints(a: f64, b: f64, width: f64, extra: &[f64]) -> Vec<f64> {
    let k = ((b - a) / width).ceil().max(1.0) as usize;
    let mut v: Vec<f64> = (0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect();
    v.extend(extra.iter().copied().filter(|&c| c > a && c < b));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    v
}
