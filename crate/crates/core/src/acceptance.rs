//! The acceptance suite: exponent recovery for every regime plus the property suites.
//! Each criterion returns one [`Outcome`]; bands and budgets are constants here.

use std::sync::Arc;
use std::time::Instant;

use crate::density::{AnalyticDensity, DensitySpec};
use crate::error::Result;
use crate::experiment::{sample_fitted, sampler_seeds};
use crate::gaussian::{tail_ratio, uniform_score, upper_tail};
use crate::lower_bound::{
    build_fano, heat_identity_check, kl_radius, max_grid_points, separation_pairs, separation_with_escalation,
    two_point_g, two_point_g_double, two_point_identity, FanoParams,
};
use crate::oracle::NoisyDensityOracle;
use crate::risk::{fit_rate_raw, integrated_risk, mean_stderr, replicate_records, risk, risk_monte_carlo, Axis, RiskOptions};
use crate::sampler::{kl_init_check, tv_empirical, w1_empirical, DriftMode, TimeGrid};
use crate::score::{score_low_rough, DensityEstimate, FittedScores, ScoreConfig};

pub const SEED: u64 = 0xacce_0001;

pub const AC1_TARGET: f64 = -0.4;
pub const AC1_BAND: f64 = 0.12;
pub const AC1_BUDGET_S: f64 = 600.0;
pub const AC1_REPS: usize = 50;
pub const AC1_T: f64 = 1e-5;

pub const AC2_TARGET: f64 = -1.5;
pub const AC2_BAND: f64 = 0.2;
pub const AC2_REPS: usize = 50;

pub const AC3_TARGET: f64 = -2.0;
pub const AC3_BAND: f64 = 0.2;
pub const AC3_REPS: usize = 50;

pub const AC4_TARGET: f64 = -0.5;
pub const AC4_BAND: f64 = 0.15;

pub const AC5A_TARGET: f64 = -0.8;
pub const AC5A_BAND: f64 = 0.15;
pub const AC5A_REPS: usize = 20;
pub const AC5B_TARGET: f64 = -0.4;
pub const AC5B_BAND: f64 = 0.15;
pub const AC5B_DRAWS: usize = 10_000;
pub const TV_BINS: usize = 32;
/// exact-draw batches averaged for the histogram-noise floor
pub const FLOOR_BATCHES: usize = 64;

pub const AC6_TARGET: f64 = -0.5;
pub const AC6_BAND: f64 = 0.15;
pub const AC6_DRAWS: usize = 100_000;
pub const SAMPLER_REPS: usize = 6;

pub const AC7_M: usize = 12;
pub const AC7_TS: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const AC7_EPS_OVER_SQRT_T: f64 = 0.4;
pub const AC7_HEAT_REL: f64 = 1e-4;
pub const AC7_KL_REL: f64 = 1e-8;
pub const AC7_TWO_POINT_REL: f64 = 1e-8;
pub const AC7_DOUBLE_REL: f64 = 1e-9;
pub const AC7_BUDGET_S: f64 = 300.0;

pub const AC8_SCORE_TOL: f64 = 1e-7;
pub const AC8_ROUGH_TOL: f64 = 1e-12;

pub const AC9_RATIO_MAX: f64 = 0.67;
pub const AC9_TWEEDIE_TOL: f64 = 1e-7;
pub const AC9_BUDGET_S: f64 = 60.0;

/// Quadrature and Monte-Carlo risks must agree within this many standard errors.
pub const MC_SIGMAS: f64 = 4.0;
pub const MC_DRAWS: usize = 100_000;

/// `c_h` for the alpha = 2 rate experiments.
pub const SMOOTH_C_H: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: &'static str,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{:<5} {}  {}: {} [{:.1}s]",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub fn smooth_density() -> AnalyticDensity {
    AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0)).expect("valid density")
}

pub fn rough_density() -> AnalyticDensity {
    AnalyticDensity::new(DensitySpec::multiscale(0.5, 0.0064, 0.25, 12, 7)).expect("valid density")
}

fn smooth_config() -> ScoreConfig {
    ScoreConfig { c_h: SMOOTH_C_H, ..ScoreConfig::default() }
}

fn dyadic(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

fn within(slope: f64, target: f64, band: f64) -> bool {
    (slope - target).abs() <= band
}

fn timed(id: &'static str, title: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome { id, title, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Quadrature risk of one fitted estimator against a `MC_DRAWS` Monte-Carlo estimate.
pub fn mc_agreement(f: &AnalyticDensity, n: usize, t: f64, alpha: f64, cfg: &ScoreConfig, seed: u64) -> Result<(f64, f64, f64)> {
    let oracle = NoisyDensityOracle::new(f.clone());
    let fit = FittedScores::fit(&f.sample(n, seed), alpha, cfg)?;
    let est = fit.slice(t);
    let q = risk(|x| est.eval(x), &oracle.at(t), f.envelope(), &RiskOptions::default())?.value;
    let (m, se) = risk_monte_carlo(|x| est.eval(x), &oracle, t, MC_DRAWS, seed ^ 0x3c)?;
    Ok((q, m, se))
}

fn mc_text(q: f64, m: f64, se: f64) -> (bool, String) {
    let ok = (q - m).abs() <= MC_SIGMAS * se;
    (ok, format!("quad/MC {q:.3e}/{m:.3e} (|diff| {:.1} se)", (q - m).abs() / se))
}

fn slope_vs_t(f: &AnalyticDensity, n: usize, ts: &[f64], alpha: f64, reps: usize, cfg: &ScoreConfig) -> Result<(f64, String)> {
    let recs = replicate_records(f, n, ts, alpha, reps, SEED, cfg, &RiskOptions::default())?;
    let ys: Vec<f64> = recs.iter().map(|r| r.risk_mean).collect();
    let fit = fit_rate_raw(ts, &ys, Axis::VsT)?;
    let pts: Vec<String> = recs.iter().map(|r| format!("{:.3e}", r.risk_mean)).collect();
    Ok((fit.slope, pts.join(" ")))
}

pub fn ac1() -> Outcome {
    timed("AC1", "low-noise rate in n", || {
        let f = smooth_density();
        let cfg = smooth_config();
        let start = Instant::now();
        let ns = dyadic(9, 14);
        let mut ys = Vec::new();
        for &n in &ns {
            let r = replicate_records(&f, n, &[AC1_T], 2.0, AC1_REPS, SEED, &cfg, &RiskOptions::default())?;
            ys.push(r[0].risk_mean);
        }
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let fit = fit_rate_raw(&xs, &ys, Axis::VsN)?;
        let secs = start.elapsed().as_secs_f64();
        let (mc_ok, mc) = {
            let (q, m, se) = mc_agreement(&f, 4096, AC1_T, 2.0, &cfg, SEED)?;
            mc_text(q, m, se)
        };
        let ok = within(fit.slope, AC1_TARGET, AC1_BAND) && secs <= AC1_BUDGET_S && mc_ok;
        Ok((
            ok,
            format!(
                "slope {:.3} (target {AC1_TARGET} ± {AC1_BAND}), r2 {:.3}, {secs:.0}s of {AC1_BUDGET_S:.0}s; {mc}",
                fit.slope, fit.r_squared
            ),
        ))
    })
}

pub fn ac2() -> Outcome {
    timed("AC2", "high-noise rate in t", || {
        let f = smooth_density();
        let n = 4096usize;
        let base = (n as f64).powf(-0.4);
        let ts: Vec<f64> = (0..=5).map(|k| base * 2f64.powi(k)).filter(|&t| t <= 1.0).collect();
        let cfg = ScoreConfig::default();
        let (slope, pts) = slope_vs_t(&f, n, &ts, 2.0, AC2_REPS, &cfg)?;
        let (q, m, se) = mc_agreement(&f, n, ts[0], 2.0, &cfg, SEED)?;
        let (mc_ok, mc) = mc_text(q, m, se);
        let ok = within(slope, AC2_TARGET, AC2_BAND) && mc_ok;
        Ok((ok, format!("slope {slope:.3} (target {AC2_TARGET} ± {AC2_BAND}) over {} t; risks {pts}; {mc}", ts.len())))
    })
}

pub fn ac3() -> Outcome {
    timed("AC3", "very-high-noise rate in t", || {
        let f = smooth_density();
        let ts = [2.0, 4.0, 8.0, 16.0, 32.0];
        let cfg = ScoreConfig::default();
        let (slope, pts) = slope_vs_t(&f, 4096, &ts, 2.0, AC3_REPS, &cfg)?;
        let (q, m, se) = mc_agreement(&f, 4096, 4.0, 2.0, &cfg, SEED)?;
        let (mc_ok, mc) = mc_text(q, m, se);
        let ok = within(slope, AC3_TARGET, AC3_BAND) && mc_ok;
        Ok((ok, format!("slope {slope:.3} (target {AC3_TARGET} ± {AC3_BAND}); risks {pts}; {mc}")))
    })
}

pub fn ac4() -> Outcome {
    timed("AC4", "rough-density rate in t", || {
        let f = rough_density();
        let n = 4096usize;
        let t_low = (n as f64).powf(-2.0 / (2.0 * 0.5 + 1.0));
        let ts: Vec<f64> = (0..=6).map(|k| 10f64.powf(-6.0 + 0.5 * k as f64)).filter(|&t| t < t_low).collect();
        let fit = FittedScores::fit(&f.sample(n, SEED), 0.5, &ScoreConfig::default())?;
        let oracle = NoisyDensityOracle::new(f.clone());
        let mut ys = Vec::new();
        for &t in &ts {
            let s = fit.slice(t);
            ys.push(risk(|x| s.eval(x), &oracle.at(t), f.envelope(), &RiskOptions::default())?.value);
        }
        let slope = fit_rate_raw(&ts, &ys, Axis::VsT)?.slope;
        let ok = within(slope, AC4_TARGET, AC4_BAND);
        Ok((ok, format!("slope {slope:.3} (target {AC4_TARGET} ± {AC4_BAND}) over t in [1e-6, 1e-3], 1 replication")))
    })
}

pub fn ac5a() -> Outcome {
    timed("AC5a", "integrated risk rate in n", || {
        let f = smooth_density();
        let cfg = smooth_config();
        let ts: Vec<f64> = (0..=24).map(|k| 10f64.powf(-6.0 + k as f64 / 3.0)).filter(|&t| t <= 64.0).collect();
        let ns = dyadic(9, 13);
        let mut ys = Vec::new();
        for &n in &ns {
            ys.push(integrated_risk(&f, n, 2.0, &ts, AC5A_REPS, SEED, &cfg)?);
        }
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let fit = fit_rate_raw(&xs, &ys, Axis::VsN)?;
        let pts: Vec<String> = ys.iter().map(|y| format!("{y:.3e}")).collect();
        Ok((
            within(fit.slope, AC5A_TARGET, AC5A_BAND),
            format!("slope {:.3} (target {AC5A_TARGET} ± {AC5A_BAND}); integrals {}", fit.slope, pts.join(" ")),
        ))
    })
}

/// Mean TV of `AC5B_DRAWS` exact draws: the part of `tv_empirical` due to sampling noise alone.
pub fn histogram_floor(f: &AnalyticDensity) -> Result<f64> {
    let mut acc = 0.0;
    for b in 0..FLOOR_BATCHES {
        let d = f.sample(AC5B_DRAWS, crate::seed::mix64(SEED ^ 0xf1, b as u64));
        acc += tv_empirical(&d.values, f, TV_BINS)?;
    }
    Ok(acc / FLOOR_BATCHES as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRates {
    pub ns: Vec<usize>,
    /// mean TV of the first `AC5B_DRAWS` draws
    pub tv: Vec<f64>,
    pub tv_corrected: Vec<f64>,
    pub floor: f64,
    pub w1: Vec<f64>,
    pub tv_slope: f64,
    pub w1_slope: f64,
    pub seconds: f64,
}

/// One sampler run of `AC6_DRAWS` paths per `(n, rep)`; TV uses the first `AC5B_DRAWS`
/// draws and W1 all of them.
pub fn sampler_rates() -> Result<SamplerRates> {
    let start = Instant::now();
    let f = smooth_density();
    let cfg = smooth_config();
    let grid = TimeGrid::default_grid();
    let ns = dyadic(9, 13);
    let floor = histogram_floor(&f)?;
    let (mut tv, mut w1) = (Vec::new(), Vec::new());
    for &n in &ns {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for rep in 0..SAMPLER_REPS {
            let (ds, ps) = sampler_seeds(SEED, rep);
            let batch = sample_fitted(&f, n, 2.0, &cfg, &grid, AC6_DRAWS, ds, ps, DriftMode::Memoized)?;
            batch.ensure_finite()?;
            a.push(tv_empirical(&batch.values[..AC5B_DRAWS], &f, TV_BINS)?);
            b.push(w1_empirical(&batch.values, &f)?);
        }
        tv.push(mean_stderr(&a).0);
        w1.push(mean_stderr(&b).0);
    }
    let tv_corrected: Vec<f64> = tv.iter().map(|v| (v * v - floor * floor).max(1e-300).sqrt()).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let tv_slope = fit_rate_raw(&xs, &tv_corrected, Axis::VsN)?.slope;
    let w1_slope = fit_rate_raw(&xs, &w1, Axis::VsN)?.slope;
    Ok(SamplerRates { ns, tv, tv_corrected, floor, w1, tv_slope, w1_slope, seconds: start.elapsed().as_secs_f64() })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|y| format!("{y:.3e}")).collect::<Vec<_>>().join(" ")
}

pub fn ac5b(r: &Result<SamplerRates>) -> Outcome {
    let (pass, detail) = match r {
        Ok(r) => (
            within(r.tv_slope, AC5B_TARGET, AC5B_BAND),
            format!(
                "slope {:.3} (target {AC5B_TARGET} ± {AC5B_BAND}); floor {:.3e}; TV {}; corrected {}",
                r.tv_slope,
                r.floor,
                fmt_list(&r.tv),
                fmt_list(&r.tv_corrected)
            ),
        ),
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome { id: "AC5b", title: "sampler TV rate in n", pass, detail, seconds: r.as_ref().map_or(0.0, |r| r.seconds) }
}

pub fn ac6(r: &Result<SamplerRates>) -> Outcome {
    let (pass, detail) = match r {
        Ok(r) => (
            within(r.w1_slope, AC6_TARGET, AC6_BAND),
            format!("slope {:.3} (target {AC6_TARGET} ± {AC6_BAND}); W1 {}", r.w1_slope, fmt_list(&r.w1)),
        ),
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome { id: "AC6", title: "sampler W1 rate in n (shares the AC5b run)", pass, detail, seconds: 0.0 }
}

/// The m = 12 separation check at one t: C3 in {4, 8, 16}, each with the default grid
/// margin. Returns whether some C3 admits a 12-point family whose pairs all pass, and
/// a description of every attempt.
fn separation_at_m12(t: f64) -> Result<(bool, String)> {
    let eps = AC7_EPS_OVER_SQRT_T * t.sqrt();
    let base = FanoParams::default();
    let mut notes = Vec::new();
    for c3 in [base.c3, 2.0 * base.c3, 4.0 * base.c3] {
        let p = FanoParams { c3, ..base };
        let fit = max_grid_points(t, eps, &p);
        if fit < AC7_M {
            notes.push(format!("C3={c3}: only {fit} points fit"));
            continue;
        }
        let fam = build_fano(AC7_M, t, 2.0, eps, &p)?;
        let pairs = separation_pairs(&fam)?;
        let worst = pairs.iter().map(|q| q.separation / q.bound).fold(f64::INFINITY, f64::min);
        if pairs.iter().all(|q| q.pass) {
            notes.push(format!("C3={c3}: {} pairs pass, worst ratio {worst:.3}", pairs.len()));
            return Ok((true, notes.join(", ")));
        }
        notes.push(format!("C3={c3}: worst ratio {worst:.3} over {} pairs", pairs.len()));
    }
    Ok((false, notes.join(", ")))
}

pub fn ac7() -> Outcome {
    timed("AC7", "lower-bound construction suite", || {
        let start = Instant::now();
        let mut parts = Vec::new();
        let mut ok = true;

        let mut sep_ok = true;
        for &t in &AC7_TS {
            let (pass, note) = separation_at_m12(t)?;
            sep_ok &= pass;
            let eps = AC7_EPS_OVER_SQRT_T * t.sqrt();
            let esc = separation_with_escalation(AC7_M, t, 2.0, eps, &FanoParams::default())?;
            parts.push(format!(
                "t={t:e} m=12 {} [{note}] (largest feasible m: C3={} m={} {} worst {:.3})",
                if pass { "pass" } else { "FAIL" },
                esc.c3,
                esc.m,
                if esc.pass() { "pass" } else { "fail" },
                esc.worst_ratio()
            ));
        }
        ok &= sep_ok;

        let mut heat = 0.0f64;
        for &t in &AC7_TS {
            for rho in [1.0, 0.5, 0.25] {
                let (l, r) = heat_identity_check(rho, t)?;
                heat = heat.max((l - r).abs() / r.abs());
            }
        }
        ok &= heat <= AC7_HEAT_REL;
        parts.push(format!("heat identity max rel {heat:.1e}"));

        let mut kl = 0.0f64;
        let fam = build_fano(AC7_M, 1e-4, 2.0, AC7_EPS_OVER_SQRT_T * 1e-2, &FanoParams::default())?;
        let mut kl_le = true;
        for b in 0..fam.size().min(16) {
            let k = kl_radius(&fam, b)?;
            kl_le &= k.kl <= k.chi2;
            if k.closed_form > 0.0 {
                kl = kl.max((k.chi2 - k.closed_form).abs() / k.closed_form);
            }
        }
        ok &= kl <= AC7_KL_REL && kl_le;
        parts.push(format!("chi2 closed form max rel {kl:.1e}, KL <= chi2 {kl_le}"));

        let (mut tp, mut dq) = (0.0f64, 0.0f64);
        for t in [0.05f64, 0.5, 2.0, 8.0] {
            let r = t.sqrt();
            for i in 0..=40 {
                let x = -1.0 - r + (2.0 + 2.0 * r) * i as f64 / 40.0;
                let (l, rr) = two_point_identity(x, t, 2.0, 0.3, 1.0)?;
                tp = tp.max((l - rr).abs() / rr.abs());
                let g = two_point_g(x, t);
                dq = dq.max((g - two_point_g_double(x, t)).abs() / g.abs());
            }
        }
        ok &= tp <= AC7_TWO_POINT_REL && dq <= AC7_DOUBLE_REL;
        parts.push(format!("two-point identity max rel {tp:.1e}, double quadrature max rel {dq:.1e}"));

        let secs = start.elapsed().as_secs_f64();
        ok &= secs <= AC7_BUDGET_S;
        parts.push(format!("{secs:.0}s of {AC7_BUDGET_S:.0}s"));
        Ok((ok, parts.join("; ")))
    })
}

pub fn ac8() -> Outcome {
    timed("AC8", "oracle substitution exactness", || {
        let f = smooth_density();
        let oracle = NoisyDensityOracle::new(f.clone());
        let data = f.sample(4096, SEED);
        let est: Arc<dyn DensityEstimate> = Arc::new(f.clone());
        let fit = FittedScores::with_estimate(&data, 2.0, &ScoreConfig::default(), est)?;
        let mut worst = 0.0f64;
        for t in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
            let s = fit.slice(t);
            let r = 1.0 + 6.0 * f64::sqrt(t);
            for i in 0..200 {
                let x = -r + 2.0 * r * i as f64 / 199.0;
                let (a, b) = (s.eval(x), oracle.p_psi_s(x, t)?.s);
                worst = worst.max((a - b).abs() / (1.0 + b.abs()));
            }
        }
        let uni = NoisyDensityOracle::new(AnalyticDensity::uniform());
        let mut rough = 0.0f64;
        for t in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
            for i in 0..200 {
                let x = -3.0 + 6.0 * i as f64 / 199.0;
                let (a, b) = (score_low_rough(x, t)?, uni.p_psi_s(x, t)?.s);
                rough = rough.max((a - b).abs() / (1.0 + b.abs()));
                rough = rough.max((a - uniform_score(x, t)).abs() / (1.0 + b.abs()));
            }
        }
        let ok = worst <= AC8_SCORE_TOL && rough <= AC8_ROUGH_TOL;
        Ok((
            ok,
            format!("low-noise max rel err {worst:.1e} (tol {AC8_SCORE_TOL:e}); low-rough vs uniform {rough:.1e} (tol {AC8_ROUGH_TOL:e})"),
        ))
    })
}

pub fn ac9() -> Outcome {
    timed("AC9", "Gaussian and oracle property suite", || {
        let start = Instant::now();
        let mut parts = Vec::new();
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();

        let mut sandwich = true;
        for i in 0..=400 {
            let x = 30f64.powf(i as f64 / 400.0);
            let q = upper_tail(x);
            let e = (-x * x / 2.0).exp();
            sandwich &= c / (2.0 * x) * e <= q && q <= c / x * e;
        }
        parts.push(format!("tail sandwich {sandwich}"));

        let mut ratio = 0.0f64;
        for i in 0..=60 {
            let t = 10f64.powf(-6.0 + 6.0 * i as f64 / 60.0);
            for j in 1..=200 {
                let x = 1.0 + 10f64.powf(-6.0 + 7.0 * j as f64 / 200.0);
                ratio = ratio.max(tail_ratio(x, t));
            }
        }
        parts.push(format!("max tail ratio {ratio:.4} (limit {AC9_RATIO_MAX})"));

        let densities = [
            AnalyticDensity::uniform(),
            smooth_density(),
            build_fano(4, 1e-4, 2.0, 0.004, &FanoParams { c3: 8.0, ..FanoParams::default() })?.density(1)?,
        ];
        let mut tweedie = 0.0f64;
        let mut envelope = true;
        for f in &densities {
            let o = NoisyDensityOracle::new(f.clone());
            for t in [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
                for i in 0..=60 {
                    let x = -3.0 + 6.0 * i as f64 / 60.0;
                    let sm = o.p_psi_s(x, t)?;
                    let tw = o.tweedie_score(x, t)?;
                    tweedie = tweedie.max((tw - sm.s).abs() / (1.0 + sm.s.abs()));
                    let bound = (2.0 / t) * (-(2.0 * std::f64::consts::PI * t).sqrt().ln() - sm.log_p);
                    envelope &= sm.s * sm.s <= bound * (1.0 + 1e-12);
                }
            }
        }
        parts.push(format!("Tweedie max rel {tweedie:.1e}, score envelope {envelope}"));

        let mut kl_ok = true;
        let mut worst = 0.0f64;
        for f in &densities[..2] {
            for big_t in [1.0, 10.0, 64.0, 100.0] {
                let kl = kl_init_check(f, big_t)?;
                kl_ok &= kl <= 0.5 / big_t;
                worst = worst.max(kl * 2.0 * big_t);
            }
        }
        parts.push(format!("KL-init <= 1/(2T) {kl_ok} (max KL*2T {worst:.3})"));

        let secs = start.elapsed().as_secs_f64();
        parts.push(format!("{secs:.1}s of {AC9_BUDGET_S:.0}s"));
        let ok = sandwich && ratio <= AC9_RATIO_MAX && tweedie <= AC9_TWEEDIE_TOL && envelope && kl_ok && secs <= AC9_BUDGET_S;
        Ok((ok, parts.join("; ")))
    })
}

pub const IDS: [&str; 10] = ["AC1", "AC2", "AC3", "AC4", "AC5a", "AC5b", "AC6", "AC7", "AC8", "AC9"];

/// Runs the criteria whose ids are in `only` (all when empty, case-insensitive), cheapest
/// first, calling `report` as each finishes.
pub fn run(only: &[String], mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let wanted = |id: &str| only.is_empty() || only.iter().any(|o| o.eq_ignore_ascii_case(id));
    let mut out = Vec::new();
    let mut push = |o: Outcome| {
        report(&o);
        out.push(o);
    };
    let cheap: [(&str, fn() -> Outcome); 8] =
        [("AC8", ac8), ("AC9", ac9), ("AC7", ac7), ("AC4", ac4), ("AC3", ac3), ("AC2", ac2), ("AC1", ac1), ("AC5a", ac5a)];
    for (id, f) in cheap {
        if wanted(id) {
            push(f());
        }
    }
    if wanted("AC5b") || wanted("AC6") {
        let s = sampler_rates();
        if wanted("AC5b") {
            push(ac5b(&s));
        }
        if wanted("AC6") {
            push(ac6(&s));
        }
    }
    out
}
