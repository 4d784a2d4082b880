//! Score-matching risk, replication over datasets and log-log rate fits.

use crate::density::AnalyticDensity;
use crate::error::{domain, Error, Result};
use crate::gaussian::upper_tail;
use crate::oracle::{NoisyDensityOracle, OracleSlice};
use crate::quadrature::{breakpoints, integrate};
use crate::score::{d1_edge, d2_edge, FittedScores, Regime, ScoreConfig};
use crate::seed::{mix64, stream_rng};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub n: usize,
    pub t: f64,
    pub alpha: f64,
    pub regime: Regime,
    pub risk_mean: f64,
    pub risk_stderr: f64,
    pub reps: usize,
    pub seed: u64,
}

impl RiskRecord {
    pub const HEADER: [&'static str; 8] = ["n", "t", "alpha", "regime", "risk_mean", "risk_stderr", "reps", "seed"];

    pub fn row(&self) -> [String; 8] {
        [
            self.n.to_string(),
            format!("{:e}", self.t),
            self.alpha.to_string(),
            self.regime.to_string(),
            format!("{:e}", self.risk_mean),
            format!("{:e}", self.risk_stderr),
            self.reps.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    VsN,
    VsT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub axis: Axis,
}

/// Ordinary least squares on `(log x, log y)` pairs.
pub fn fit_rate(points: &[(f64, f64)], axis: Axis) -> Result<RateFit> {
    if points.len() < 3 {
        return domain(format!("rate fit needs at least 3 points, got {}", points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return domain("rate fit needs at least two distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RateFit { slope, intercept, r_squared, axis })
}

/// Fit on raw (positive) values; logs are taken here.
pub fn fit_rate_raw(xs: &[f64], ys: &[f64], axis: Axis) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return domain("rate fit abscissae and ordinates differ in length");
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return domain("rate fit needs positive values");
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    fit_rate(&pts, axis)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskOptions {
    pub rel_tol: f64,
    /// absolute floor so that (near-)exact estimators terminate
    pub abs_tol: f64,
    /// the tail remainder must stay below this fraction of the integral
    pub tail_frac: f64,
    pub max_intervals: usize,
}

impl Default for RiskOptions {
    fn default() -> Self {
        RiskOptions { rel_tol: 1e-6, abs_tol: 1e-13, tail_frac: 1e-9, max_intervals: 400_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub value: f64,
    pub error: f64,
    pub tail_bound: f64,
    pub radius: f64,
    pub evals: usize,
}

/// Bound on `int_{|x| > r} (|s_hat| + |s|)^2 p` using `|s|, |s_hat| <= (|x| + 1)/t` and
/// `p(x) <= sup f * P{Z >= (|x| - 1)/sqrt t}`.
fn tail_bound(r: f64, t: f64, fmax: f64) -> Result<f64> {
    let s = t.sqrt();
    let g = |x: f64| 4.0 * ((x + 1.0) / t).powi(2) * fmax * upper_tail((x - 1.0) / s);
    let end = r + 40.0 * s + 1.0;
    let br = breakpoints(r, end, 2.0 * s, &[]);
    Ok(2.0 * integrate(g, &br, 1e-6, 0.0)?.value)
}

/// `int (s_hat - s)^2 p dx` at noise level `truth.t()`.
pub fn risk(score: impl Fn(f64) -> f64, truth: &OracleSlice<'_>, fmax: f64, opts: &RiskOptions) -> Result<RiskValue> {
    let t = truth.t();
    if !(t > 0.0) {
        return domain(format!("noise scale must be positive, got {t}"));
    }
    let s = t.sqrt();
    let mut radius = 1.0 + (10.0 * s).max(10.0);
    for _ in 0..12 {
        let dense = (1.0 + 12.0 * s).min(radius);
        let mut extra = vec![-radius, radius, 0.0, -1.0, 1.0];
        let e1 = d1_edge(t, 4.0);
        if e1 > 0.0 {
            extra.extend([-e1, e1]);
        }
        let e2 = d2_edge(t, 4.0);
        if e2 < radius {
            extra.extend([-e2, e2]);
        }
        let mut br = breakpoints(-dense, dense, s.min(0.5 * dense), &extra);
        br.retain(|&b| b >= -radius && b <= radius);
        let integrand = |x: f64| {
            let v = truth.eval(x);
            if v.p == 0.0 {
                return 0.0;
            }
            let d = score(x) - v.s;
            d * d * v.p
        };
        let r = crate::quadrature::integrate_limited(integrand, &br, opts.rel_tol, opts.abs_tol, opts.max_intervals)
            .map_err(|e| Error::Numeric(format!("risk at t = {t}: {e}")))?;
        let tail = tail_bound(radius, t, fmax)?;
        if tail <= opts.tail_frac * r.value.abs() || tail <= opts.abs_tol * 1e-3 {
            return Ok(RiskValue { value: r.value, error: r.error, tail_bound: tail, radius, evals: r.evals });
        }
        radius *= 2.0;
    }
    Err(Error::Numeric(format!("tail remainder did not fall below tolerance at t = {t}")))
}

/// Monte-Carlo estimate `(mean, stderr)` of the risk: `X = mu + sqrt(t) Z`, `mu ~ f`.
pub fn risk_monte_carlo(
    score: impl Fn(f64) -> f64,
    oracle: &NoisyDensityOracle,
    t: f64,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let data = oracle.density().sample(draws, seed);
    let mut rng = stream_rng(seed, u64::MAX);
    let s = t.sqrt();
    let (mut m, mut m2) = (0.0, 0.0);
    for &mu in &data.values {
        let z: f64 = rng.sample(StandardNormal);
        let x = mu + s * z;
        let d = score(x) - oracle.p_psi_s(x, t)?.s;
        m += d * d;
        m2 += d * d * d * d;
    }
    let k = draws as f64;
    let mean = m / k;
    let var = (m2 / k - mean * mean).max(0.0) * k / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

/// Mean and standard error.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Per-replication risks on a t grid: rows are replications, columns follow `ts`.
///
/// Replication `r` draws its dataset with seed `mix64(master_seed, r)`.
pub fn replicate_grid(
    f: &AnalyticDensity,
    n: usize,
    ts: &[f64],
    alpha: f64,
    reps: usize,
    master_seed: u64,
    cfg: &ScoreConfig,
    opts: &RiskOptions,
) -> Result<Vec<Vec<f64>>> {
    if reps < 1 {
        return domain("need at least one replication");
    }
    let oracle = NoisyDensityOracle::new(f.clone());
    let fmax = f.envelope();
    let slices: Vec<OracleSlice<'_>> = ts.iter().map(|&t| oracle.at(t)).collect();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = f.sample(n, mix64(master_seed, r as u64));
            let fit = FittedScores::fit(&data, alpha, cfg)?;
            slices
                .iter()
                .map(|sl| {
                    let est = fit.slice(sl.t());
                    Ok(risk(|x| est.eval(x), sl, fmax, opts)?.value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Replicated risk at one `(n, t)`.
pub fn replicate(
    f: &AnalyticDensity,
    n: usize,
    t: f64,
    alpha: f64,
    reps: usize,
    master_seed: u64,
    cfg: &ScoreConfig,
) -> Result<RiskRecord> {
    if reps < 2 {
        return domain(format!("need at least 2 replications, got {reps}"));
    }
    let rows = replicate_grid(f, n, &[t], alpha, reps, master_seed, cfg, &RiskOptions::default())?;
    let v: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let (risk_mean, risk_stderr) = mean_stderr(&v);
    Ok(RiskRecord {
        n,
        t,
        alpha,
        regime: cfg.bounds(n, alpha).regime(t),
        risk_mean,
        risk_stderr,
        reps,
        seed: master_seed,
    })
}

/// Records for every t in the grid from one set of replications.
pub fn replicate_records(
    f: &AnalyticDensity,
    n: usize,
    ts: &[f64],
    alpha: f64,
    reps: usize,
    master_seed: u64,
    cfg: &ScoreConfig,
    opts: &RiskOptions,
) -> Result<Vec<RiskRecord>> {
    if reps < 2 {
        return domain(format!("need at least 2 replications, got {reps}"));
    }
    let rows = replicate_grid(f, n, ts, alpha, reps, master_seed, cfg, opts)?;
    let bounds = cfg.bounds(n, alpha);
    Ok(ts
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let (risk_mean, risk_stderr) = mean_stderr(&v);
            RiskRecord { n, t, alpha, regime: bounds.regime(t), risk_mean, risk_stderr, reps, seed: master_seed }
        })
        .collect())
}

/// Trapezoid rule over t.
pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2).zip(ys.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

/// Trapezoidal integral over `t_grid` of the replicated mean risk.
pub fn integrated_risk(
    f: &AnalyticDensity,
    n: usize,
    alpha: f64,
    t_grid: &[f64],
    reps: usize,
    seed: u64,
    cfg: &ScoreConfig,
) -> Result<f64> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 0.0) {
        return domain("t grid must be positive and strictly ascending");
    }
    let rows = replicate_grid(f, n, t_grid, alpha, reps, seed, cfg, &RiskOptions::default())?;
    let means: Vec<f64> = (0..t_grid.len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / reps as f64).collect();
    Ok(trapezoid(t_grid, &means))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;

    #[test]
    fn fit_examples() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, -1.5 * i as f64 + 2.0)).collect();
        let r = fit_rate(&pts, Axis::VsN).unwrap();
        assert!((r.slope + 1.5).abs() < 1e-12 && (r.r_squared - 1.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(fit_rate(&flat, Axis::VsT).unwrap().slope, 0.0);
        assert!(fit_rate(&pts[..2], Axis::VsN).is_err());
    }

    #[test]
    fn oracle_estimator_has_zero_risk() {
        let f = AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0)).unwrap();
        let o = NoisyDensityOracle::new(f.clone());
        for &t in &[1e-5, 0.01, 3.0] {
            let sl = o.at(t);
            let r = risk(|x| sl.score(x), &sl, f.envelope(), &RiskOptions::default()).unwrap();
            assert!(r.value.abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_low_rough_has_zero_risk() {
        let o = NoisyDensityOracle::new(AnalyticDensity::uniform());
        for &t in &[1e-6, 1e-3] {
            let sl = o.at(t);
            let r = risk(|x| crate::gaussian::uniform_score(x, t), &sl, 0.5, &RiskOptions::default()).unwrap();
            assert!(r.value.abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo() {
        let f = AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0)).unwrap();
        let o = NoisyDensityOracle::new(f.clone());
        let data = f.sample(256, 11);
        let fit = FittedScores::fit(&data, 2.0, &ScoreConfig::default()).unwrap();
        for &t in &[0.2, 2.0] {
            let est = fit.slice(t);
            let sl = o.at(t);
            let q = risk(|x| est.eval(x), &sl, f.envelope(), &RiskOptions::default()).unwrap().value;
            let (m, se) = risk_monte_carlo(|x| est.eval(x), &o, t, 100_000, 5).unwrap();
            assert!((q - m).abs() < 4.0 * se, "{t} {q} {m} {se}");
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let f = AnalyticDensity::uniform();
        let cfg = ScoreConfig::default();
        let a = replicate(&f, 128, 0.5, 2.0, 3, 9, &cfg).unwrap();
        let b = replicate(&f, 128, 0.5, 2.0, 3, 9, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.risk_mean >= 0.0 && a.risk_stderr >= 0.0);
        assert!(replicate(&f, 128, 0.5, 2.0, 1, 9, &cfg).is_err());
    }

    #[test]
    fn trapezoid_rule() {
        assert!((trapezoid(&[0.0, 1.0, 3.0], &[1.0, 1.0, 2.0]) - 4.0).abs() < 1e-15);
    }
}
