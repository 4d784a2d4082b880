use diffscore::density::{AnalyticDensity, DensitySpec};
use diffscore::experiment::sample_fitted;
use diffscore::kernel::KdeModel;
use diffscore::oracle::NoisyDensityOracle;
use diffscore::risk::{fit_rate, fit_rate_raw, mean_stderr, replicate_records, risk, trapezoid, Axis, RiskOptions};
use diffscore::sampler::{kl_init_check, reverse_sample_coupled, tv_empirical, DriftMode, TimeGrid};
use diffscore::score::{FittedScores, ScoreConfig};
use diffscore::seed::mix64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 0x5747;

fn smooth() -> AnalyticDensity {
    AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0)).unwrap()
}

fn smooth_config() -> ScoreConfig {
    ScoreConfig { c_h: 3.0, ..ScoreConfig::default() }
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (k - 1) as f64).exp()).collect()
}

#[test]
fn pointwise_kde_mse_rates() {
    let f = smooth();
    let ns: Vec<usize> = (9..=14).map(|k| 1 << k).collect();
    let (mut m0, mut m1) = (Vec::new(), Vec::new());
    for &n in &ns {
        let (mut e0, mut e1) = (0.0, 0.0);
        for r in 0..50u64 {
            let data = f.sample(n, mix64(SEED ^ n as u64, r));
            let kde = KdeModel::fit(&data, 2.0, 1.0).unwrap();
            e0 += (kde.eval(0.0, 0).unwrap() - f.eval(0.0)).powi(2);
            e1 += (kde.eval(0.0, 1).unwrap() - f.deriv(0.0)).powi(2);
        }
        m0.push(e0 / 50.0);
        m1.push(e1 / 50.0);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let s0 = fit_rate_raw(&xs, &m0, Axis::VsN).unwrap().slope;
    let s1 = fit_rate_raw(&xs, &m1, Axis::VsN).unwrap().slope;
    assert!((s0 + 0.8).abs() <= 0.15, "value slope {s0}: {m0:?}");
    assert!((s1 + 0.4).abs() <= 0.15, "derivative slope {s1}: {m1:?}");
}

#[test]
fn fit_rate_recovers_noisy_slopes() {
    let noise = Normal::new(0.0, 0.05).unwrap();
    let xs: Vec<f64> = (9..=16).map(|k| (k as f64) * 2f64.ln()).collect();
    let trials = 400;
    let hits = (0..trials)
        .filter(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, -0.4 * x + noise.sample(&mut rng))).collect();
            (fit_rate(&pts, Axis::VsN).unwrap().slope + 0.4).abs() <= 0.1
        })
        .count();
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

/// The rate shape with one constant: the smallest `c` for which `c * shape` clears every lower
/// 2-stderr band must also stay within `SHAPE_SPREAD` of every upper band.
const SHAPE_SPREAD: f64 = 1e3;

#[test]
fn risk_follows_regime_shape_at_fixed_n() {
    let f = smooth();
    let n = 1024;
    let ts = log_grid(1e-5, 10.0, 13);
    let recs = replicate_records(&f, n, &ts, 2.0, 10, SEED, &smooth_config(), &RiskOptions::default()).unwrap();
    let nf = n as f64;
    let shape = |t: f64| (1.0 / (nf * t * t)).min(1.0 / (nf * t.powf(1.5))).min(nf.powf(-0.4) + t);
    let c = recs.iter().map(|r| (r.risk_mean - 2.0 * r.risk_stderr).max(0.0) / shape(r.t)).fold(0.0, f64::max);
    for r in &recs {
        let hi = r.risk_mean + 2.0 * r.risk_stderr;
        assert!(hi * SHAPE_SPREAD >= c * shape(r.t), "t {:e}: risk {:e}, c {c:e}, shape {:e}", r.t, r.risk_mean, shape(r.t));
    }
}

/// Spread of the binned TV of exact draws: mean and standard deviation.
fn tv_noise(f: &AnalyticDensity, m: usize) -> (f64, f64) {
    let v: Vec<f64> = (0..32u64).map(|b| tv_empirical(&f.sample(m, mix64(SEED ^ 0x77, b)).values, f, 32).unwrap()).collect();
    let (mean, se) = mean_stderr(&v);
    (mean, se * (v.len() as f64).sqrt())
}

#[test]
fn path_kl_dominates_pinsker_bound() {
    let f = smooth();
    let n = 512;
    let cfg = smooth_config();
    let grid = TimeGrid::default_grid();
    let m = 10_000;
    let batch = sample_fitted(&f, n, 2.0, &cfg, &grid, m, mix64(SEED, 1), mix64(SEED, 2), DriftMode::Memoized).unwrap();
    let tv = tv_empirical(&batch.values, &f, 32).unwrap();

    let fit = FittedScores::fit(&f.sample(n, mix64(SEED, 1)), 2.0, &cfg).unwrap();
    let oracle = NoisyDensityOracle::new(f.clone());
    let ts = log_grid(grid.t_floor(), grid.horizon(), 40);
    let risks: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let est = fit.slice(t);
            risk(|x| est.eval(x), &oracle.at(t), f.envelope(), &RiskOptions::default()).unwrap().value
        })
        .collect();
    let path_kl = 0.5 * trapezoid(&ts, &risks);
    let init_tv = (kl_init_check(&f, grid.horizon()).unwrap() / 2.0).sqrt();
    let (floor, sd) = tv_noise(&f, m);
    let excess = (tv - floor - 3.0 * sd - init_tv).max(0.0);
    assert!(path_kl >= 2.0 * excess * excess, "path KL {path_kl:e}, tv {tv:e}, floor {floor:e}, init {init_tv:e}");
}

#[test]
fn refining_the_time_grid_moves_tv_less_than_its_noise() {
    let f = smooth();
    let fit = FittedScores::fit(&f.sample(1024, mix64(SEED, 3)), 2.0, &smooth_config()).unwrap();
    let grid = TimeGrid::default_grid();
    let fine = grid.refined();
    let m = 10_000;
    let out = reverse_sample_coupled(&fit, &fine, &[&fine, &grid], m, mix64(SEED, 4), DriftMode::Memoized).unwrap();
    let a = tv_empirical(&out[0].values, &f, 32).unwrap();
    let b = tv_empirical(&out[1].values, &f, 32).unwrap();
    let (_, sd) = tv_noise(&f, m);
    assert!((a - b).abs() < sd, "fine {a:e} coarse {b:e} noise {sd:e}");
}
