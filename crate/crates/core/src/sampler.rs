//! Reverse-SDE sampling for the variance-exploding diffusion and distances to the truth.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::AnalyticDensity;
use crate::error::{domain, Error, Result};
use crate::gaussian::log_phi;
use crate::oracle::NoisyDensityOracle;
use crate::quadrature::{breakpoints, gl16, integrate};
use crate::score::FittedScores;
use crate::seed::{mix64, stream_rng};

pub const DEFAULT_HORIZON: f64 = 64.0;
pub const DEFAULT_FLOOR: f64 = 1e-5;
pub const DEFAULT_STEPS: usize = 400;

/// Remaining-variance levels `T = tau_0 > tau_1 > ... > tau_K = t_floor`, followed by a
/// final step to 0 when `t_floor > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    t_floor: f64,
    levels: Vec<f64>,
}

impl TimeGrid {
    /// Geometric grid with `steps` ratios between `horizon` and `t_floor`.
    pub fn geometric(horizon: f64, t_floor: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if !(t_floor > 0.0 && t_floor < horizon) {
            return domain(format!("t_floor must lie in (0, T), got {t_floor}"));
        }
        if steps < 2 {
            return domain(format!("a grid needs at least 2 steps, got {steps}"));
        }
        let ratio = (t_floor / horizon).powf(1.0 / steps as f64);
        let mut levels: Vec<f64> = (0..steps).map(|k| horizon * ratio.powi(k as i32)).collect();
        levels.push(t_floor);
        levels.push(0.0);
        Ok(TimeGrid { horizon, t_floor, levels })
    }

    pub fn default_grid() -> Self {
        Self::geometric(DEFAULT_HORIZON, DEFAULT_FLOOR, DEFAULT_STEPS).expect("default grid is valid")
    }

    /// Grid from explicit levels; must decrease strictly and end at 0.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 3 {
            return domain("a grid needs at least 3 levels");
        }
        if levels.windows(2).any(|w| !(w[1] < w[0])) || *levels.last().unwrap() != 0.0 || levels.iter().any(|v| !v.is_finite()) {
            return domain("levels must decrease strictly to 0");
        }
        let t_floor = levels[levels.len() - 2];
        Ok(TimeGrid { horizon: levels[0], t_floor, levels })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn t_floor(&self) -> f64 {
        self.t_floor
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of Euler steps.
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    /// Geometric spacing factor of the first step.
    pub fn ratio(&self) -> f64 {
        self.levels[1] / self.levels[0]
    }

    /// Inserts the geometric midpoint into every step above the floor, halving the log spacing.
    pub fn refined(&self) -> Self {
        let mut out = Vec::with_capacity(2 * self.levels.len());
        let k = self.levels.len();
        for i in 0..k - 1 {
            let (a, b) = (self.levels[i], self.levels[i + 1]);
            out.push(a);
            if b > 0.0 {
                out.push((a * b).sqrt());
            }
        }
        out.push(0.0);
        TimeGrid { horizon: self.horizon, t_floor: self.t_floor, levels: out }
    }
}

/// A drift field `x -> s_hat(x, t)` at each noise level.
pub trait ScoreFamily: Sync {
    fn level(&self, t: f64) -> Box<dyn Fn(f64) -> f64 + Sync + '_>;
}

impl ScoreFamily for FittedScores {
    fn level(&self, t: f64) -> Box<dyn Fn(f64) -> f64 + Sync + '_> {
        let s = self.slice(t);
        Box::new(move |x| s.eval(x))
    }
}

impl ScoreFamily for NoisyDensityOracle {
    fn level(&self, t: f64) -> Box<dyn Fn(f64) -> f64 + Sync + '_> {
        let s = self.at(t);
        Box::new(move |x| s.score(x))
    }
}

/// The zero drift.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl ScoreFamily for ZeroDrift {
    fn level(&self, _t: f64) -> Box<dyn Fn(f64) -> f64 + Sync + '_> {
        Box::new(|_| 0.0)
    }
}

/// Adapter for plain closures `(x, t) -> score`.
pub struct FnFamily<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> ScoreFamily for FnFamily<F> {
    fn level(&self, t: f64) -> Box<dyn Fn(f64) -> f64 + Sync + '_> {
        Box::new(move |x| (self.0)(x, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DriftMode {
    /// cell-wise linear interpolation with cell width `sqrt(t)/8`
    #[default]
    Memoized,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aborted {
    pub path: usize,
    pub step: usize,
}

/// Sampler output. `values` are truncated by the indicator of [-1, 1]; `raw` are the
/// terminal states before truncation. Aborted paths are excluded from both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub raw: Vec<f64>,
    pub seed: u64,
    pub grid: TimeGrid,
    pub aborted: Vec<Aborted>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fails on the first aborted path.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.aborted.first() {
            Some(a) => Err(Error::NonFiniteDrift { path: a.path, step: a.step }),
            None => Ok(()),
        }
    }

    /// One value per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 24);
        for v in &self.values {
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }
}

/// Drift at one level, either exact or memoized on a lattice of width `sqrt(t)/8`.
struct LevelDrift<'a> {
    f: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    cell: f64,
    table: HashMap<i64, f64>,
}

impl<'a> LevelDrift<'a> {
    fn new(family: &'a dyn ScoreFamily, t: f64, mode: DriftMode, xs: &[f64]) -> Self {
        let f = family.level(t);
        let mut d = LevelDrift { f, cell: t.sqrt() / 8.0, table: HashMap::new() };
        if mode == DriftMode::Memoized {
            let mut keys: Vec<i64> = xs
                .iter()
                .filter(|x| x.is_finite())
                .flat_map(|&x| {
                    let j = (x / d.cell).floor() as i64;
                    [j, j + 1]
                })
                .collect();
            keys.sort_unstable();
            keys.dedup();
            let f = &d.f;
            let cell = d.cell;
            let vals: Vec<f64> = keys.par_iter().map(|&j| f(j as f64 * cell)).collect();
            d.table = keys.into_iter().zip(vals).collect();
        }
        d
    }

    fn eval(&self, x: f64) -> f64 {
        if self.table.is_empty() || !x.is_finite() {
            return (self.f)(x);
        }
        let u = x / self.cell;
        let j = u.floor();
        let (a, b) = (self.table[&(j as i64)], self.table[&(j as i64 + 1)]);
        a + (u - j) * (b - a)
    }
}

struct PathState {
    y: f64,
    alive: bool,
}

/// Euler-Maruyama paths of `dY = s_hat(Y, tau) d(T - tau) + dW` from `Y_0 ~ N(0, T)`.
pub fn reverse_sample(family: &dyn ScoreFamily, grid: &TimeGrid, m: usize, seed: u64, mode: DriftMode) -> Result<SampleBatch> {
    let mut out = reverse_sample_coupled(family, grid, &[grid], m, seed, mode)?;
    Ok(out.pop().expect("one batch per grid"))
}

/// Runs each grid on the same Brownian path. `fine` must contain the levels of every grid.
/// The Brownian increments are drawn on `fine`, the first grid.
pub fn reverse_sample_coupled(
    family: &dyn ScoreFamily,
    fine: &TimeGrid,
    grids: &[&TimeGrid],
    m: usize,
    seed: u64,
    mode: DriftMode,
) -> Result<Vec<SampleBatch>> {
    if m == 0 {
        return domain("need at least one path");
    }
    let fl = fine.levels();
    // index of each grid level inside the fine grid
    let mut maps = Vec::with_capacity(grids.len());
    for g in grids {
        let mut idx = Vec::with_capacity(g.levels().len());
        for &l in g.levels() {
            match fl.iter().position(|&v| v == l) {
                Some(i) => idx.push(i),
                None => return domain(format!("level {l} of a coarse grid is missing from the fine grid")),
            }
        }
        if idx[0] != 0 {
            return domain("grids must share the horizon");
        }
        maps.push(idx);
    }
    let horizon = fine.horizon();
    let init_sd = horizon.sqrt();
    let mut rngs: Vec<ChaCha8Rng> = (0..m).map(|i| stream_rng(seed, i as u64)).collect();
    let init: Vec<f64> = rngs
        .iter_mut()
        .map(|r| {
            let z: f64 = r.sample(StandardNormal);
            init_sd * z
        })
        .collect();
    let mut states: Vec<Vec<PathState>> =
        grids.iter().map(|_| init.iter().map(|&y| PathState { y, alive: true }).collect()).collect();
    let mut aborted: Vec<Vec<Aborted>> = vec![Vec::new(); grids.len()];
    // per grid: position in its level list, accumulated noise since its last level
    let mut pos: Vec<usize> = vec![0; grids.len()];
    let mut acc: Vec<Vec<f64>> = vec![vec![0.0; m]; grids.len()];
    for k in 0..fl.len() - 1 {
        let dt = fl[k] - fl[k + 1];
        let noise: Vec<f64> = rngs
            .par_iter_mut()
            .map(|r| {
                let z: f64 = r.sample(StandardNormal);
                dt.sqrt() * z
            })
            .collect();
        for (g, idx) in maps.iter().enumerate() {
            acc[g].par_iter_mut().zip(&noise).for_each(|(a, z)| *a += z);
            let p = pos[g];
            if idx[p + 1] != k + 1 {
                continue;
            }
            let tau = fl[idx[p]];
            let step = fl[idx[p]] - fl[idx[p + 1]];
            // drift at tau, or at the floor for the last step
            let ys: Vec<f64> = states[g].iter().filter(|s| s.alive).map(|s| s.y).collect();
            let drift = LevelDrift::new(family, tau, mode, &ys);
            let bad: Vec<usize> = states[g]
                .par_iter_mut()
                .zip(&acc[g])
                .enumerate()
                .filter_map(|(i, (s, &w))| {
                    if !s.alive {
                        return None;
                    }
                    let v = drift.eval(s.y);
                    if !v.is_finite() {
                        s.alive = false;
                        return Some(i);
                    }
                    s.y += v * step + w;
                    None
                })
                .collect();
            aborted[g].extend(bad.into_iter().map(|path| Aborted { path, step: p }));
            acc[g].iter_mut().for_each(|a| *a = 0.0);
            pos[g] = p + 1;
        }
    }
    Ok(states
        .into_iter()
        .zip(aborted)
        .zip(grids)
        .map(|((st, ab), g)| {
            let raw: Vec<f64> = st.iter().filter(|s| s.alive).map(|s| s.y).collect();
            let values = raw.iter().map(|&y| if y.abs() <= 1.0 { y } else { 0.0 }).collect();
            SampleBatch { values, raw, seed, grid: (*g).clone(), aborted: ab }
        })
        .collect())
}

/// Binned total variation: half the L1 distance between the empirical and true bin masses
/// over an equal-width partition of [-1, 1]. Lower-biased proxy for TV.
pub fn tv_empirical(values: &[f64], f: &AnalyticDensity, bins: usize) -> Result<f64> {
    if bins < 2 {
        return domain(format!("need at least 2 bins, got {bins}"));
    }
    if values.is_empty() {
        return domain("empty batch");
    }
    let w = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(-1.0..=1.0).contains(&v) {
            return domain(format!("sample {v} outside [-1, 1]"));
        }
        let b = (((v + 1.0) / w).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let m = values.len() as f64;
    let mut s = 0.0;
    let mut prev = f.cdf(-1.0);
    for (b, &c) in counts.iter().enumerate() {
        let hi = if b + 1 == bins { f.cdf(1.0) } else { f.cdf(-1.0 + (b + 1) as f64 * w) };
        s += (c as f64 / m - (hi - prev)).abs();
        prev = hi;
    }
    Ok(0.5 * s)
}

/// `int |c - F|` over [a, b], split where F crosses c.
fn abs_gap(f: &AnalyticDensity, c: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f.cdf(a) - c, f.cdf(b) - c);
    let gl = |lo: f64, hi: f64| {
        let (h, mid) = (0.5 * (hi - lo), 0.5 * (hi + lo));
        h * gl16().iter().map(|&(x, w)| w * (f.cdf(mid + h * x) - c)).sum::<f64>()
    };
    if fa >= 0.0 || fb <= 0.0 {
        return gl(a, b).abs();
    }
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.cdf(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    -gl(a, x) + gl(x, b)
}

/// `W1 = int_{-1}^{1} |F_m - F|` with the empirical cdf of `values`.
pub fn w1_empirical(values: &[f64], f: &AnalyticDensity) -> Result<f64> {
    if values.is_empty() {
        return domain("W1 of an empty batch");
    }
    let mut v: Vec<f64> = values.to_vec();
    if v.iter().any(|x| !(-1.0..=1.0).contains(x)) {
        return domain("samples must lie in [-1, 1]");
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    let pieces: Vec<(f64, f64, f64)> = (0..=v.len())
        .map(|i| {
            let a = if i == 0 { -1.0 } else { v[i - 1] };
            let b = if i == v.len() { 1.0 } else { v[i] };
            (a, b, i as f64 / m)
        })
        .collect();
    let parts: Vec<f64> = pieces.par_iter().map(|&(a, b, c)| abs_gap(f, c, a, b)).collect();
    Ok(parts.iter().sum())
}

/// `KL(f * phi_T || phi_T)` by quadrature.
pub fn kl_init_check(f: &AnalyticDensity, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return domain(format!("T must be positive, got {horizon}"));
    }
    let oracle = NoisyDensityOracle::new(f.clone());
    let s = horizon.sqrt();
    let r = 1.0 + 40.0 * s;
    let g = |x: f64| -> f64 {
        let sm = oracle.p_psi_s(x, horizon).expect("positive T");
        let lp = sm.log_p;
        let p = lp.exp();
        if p == 0.0 {
            0.0
        } else {
            p * (lp - log_phi(x, horizon))
        }
    };
    let br = breakpoints(-r, r, s.min(0.25), &[-1.0, 1.0]);
    let v = integrate(g, &br, 1e-10, 1e-16)?.value;
    Ok(v.max(0.0))
}

/// Seeds for repeated batches.
pub fn batch_seed(master: u64, i: u64) -> u64 {
    mix64(master, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;

    fn uniform() -> AnalyticDensity {
        AnalyticDensity::new(DensitySpec::uniform()).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = TimeGrid::default_grid();
        assert_eq!(g.steps(), 401);
        assert_eq!(g.levels()[0], 64.0);
        assert!((g.levels()[400] - 1e-5).abs() < 1e-18);
        assert_eq!(*g.levels().last().unwrap(), 0.0);
        assert!(g.ratio() > 0.0 && g.ratio() < 1.0);
        let r = g.refined();
        assert_eq!(r.steps(), 801);
        assert!(g.levels().iter().all(|l| r.levels().contains(l)));
        assert!(TimeGrid::geometric(1.0, 2.0, 10).is_err());
        assert!(TimeGrid::geometric(1.0, 0.1, 1).is_err());
    }

    #[test]
    fn zero_drift_variance() {
        let g = TimeGrid::geometric(1.0, 1e-3, 20).unwrap();
        let b = reverse_sample(&ZeroDrift, &g, 100_000, 3, DriftMode::Exact).unwrap();
        let m = b.raw.len() as f64;
        let mean = b.raw.iter().sum::<f64>() / m;
        let var = b.raw.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m - 1.0);
        // sd of the sample variance is 2 * sqrt(2 / m)
        assert!((var - 2.0).abs() < 4.0 * 2.0 * (2.0 / m).sqrt(), "var {var}");
        assert!(b.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn deterministic_and_supported() {
        let f = uniform();
        let o = NoisyDensityOracle::new(f);
        let g = TimeGrid::geometric(4.0, 1e-4, 60).unwrap();
        let a = reverse_sample(&o, &g, 500, 9, DriftMode::Memoized).unwrap();
        let b = reverse_sample(&o, &g, 500, 9, DriftMode::Memoized).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| v.abs() <= 1.0));
        a.ensure_finite().unwrap();
    }

    #[test]
    fn coupled_runs_match_single_runs() {
        let g = TimeGrid::geometric(2.0, 1e-3, 10).unwrap();
        let fine = g.refined();
        let both = reverse_sample_coupled(&ZeroDrift, &fine, &[&fine, &g], 200, 5, DriftMode::Exact).unwrap();
        let single = reverse_sample(&ZeroDrift, &fine, 200, 5, DriftMode::Exact).unwrap();
        assert_eq!(both[0].raw, single.raw);
        // zero drift: the coarse endpoint is the same Brownian sum
        for (a, b) in both[0].raw.iter().zip(&both[1].raw) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_examples() {
        let f = uniform();
        assert!(tv_empirical(&[0.1], &f, 1).is_err());
        let v = tv_empirical(&vec![0.3; 100], &f, 10).unwrap();
        assert!((v - (1.0 - 1.0 / 10.0)).abs() < 1e-12);
        let grid: Vec<f64> = (0..10_000).map(|i| -1.0 + (i as f64 + 0.5) / 5000.0).collect();
        assert!(tv_empirical(&grid, &f, 20).unwrap() < 1e-12);
    }

    #[test]
    fn w1_examples() {
        let f = AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0)).unwrap();
        assert!(w1_empirical(&[], &f).is_err());
        let m = 2000;
        let q: Vec<f64> = (0..m).map(|i| f.quantile((i as f64 + 0.5) / m as f64).unwrap()).collect();
        let w = w1_empirical(&q, &f).unwrap();
        assert!(w < 2.0 / m as f64, "w1 {w}");
        let u = uniform();
        // point mass at 0 against uniform: int |1{x>=0} - (x+1)/2| = 1/2
        assert!((w1_empirical(&[0.0], &u).unwrap() - 0.5).abs() < 1e-12);
        assert!(w1_empirical(&[1.0, 1.0], &u).unwrap() <= 2.0);
    }

    #[test]
    fn kl_init_examples() {
        let u = uniform();
        let k10 = kl_init_check(&u, 10.0).unwrap();
        assert!(k10 <= 0.05 && k10 >= 0.0);
        let k1 = kl_init_check(&u, 1.0).unwrap();
        let k100 = kl_init_check(&u, 100.0).unwrap();
        assert!(k1 > k10 && k10 > k100);
        assert!(kl_init_check(&u, 0.0).is_err());
    }
}
