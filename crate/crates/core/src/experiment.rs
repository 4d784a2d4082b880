//! Experiment configuration, grid runners and CSV output.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{AnalyticDensity, DensitySpec};
use crate::error::{domain, Error, Result};
use crate::lower_bound::{
    heat_identity_check, kl_radius, separation_with_escalation, two_point_g, two_point_g_double, two_point_identity,
    taylor_check, Domain, FanoParams, SeparationGrid,
};
use crate::risk::{fit_rate, replicate_records, Axis, RateFit, RiskOptions, RiskRecord};
use crate::sampler::{kl_init_check, reverse_sample, tv_empirical, w1_empirical, DriftMode, SampleBatch, TimeGrid};
use crate::score::{FittedScores, Regime, ScoreConfig};
use crate::seed::mix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub alpha: f64,
    pub n: Vec<usize>,
    pub t: Vec<f64>,
    pub reps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { alpha: 2.0, n: vec![512, 1024, 2048, 4096, 8192], t: vec![1e-5, 1e-3, 0.05, 0.5, 4.0], reps: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub axis: Axis,
    /// allowed distance between fitted and expected slope
    pub tolerance: f64,
    /// replaces the theoretical slope of every regime when set
    pub expected: Option<f64>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig { axis: Axis::VsN, tolerance: 0.2, expected: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub horizon: f64,
    pub t_floor: f64,
    pub steps: usize,
    /// draws per run
    pub m: usize,
    pub bins: usize,
    pub drift: DriftMode,
    pub reps: usize,
    pub write_samples: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            horizon: crate::sampler::DEFAULT_HORIZON,
            t_floor: crate::sampler::DEFAULT_FLOOR,
            steps: crate::sampler::DEFAULT_STEPS,
            m: 10_000,
            bins: 32,
            drift: DriftMode::Memoized,
            reps: 1,
            write_samples: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerBoundConfig {
    pub m: usize,
    pub t: Vec<f64>,
    pub alpha: f64,
    /// bump amplitude scale: `eps = eps_over_sqrt_t * sqrt(t)`
    pub eps_over_sqrt_t: f64,
    pub fano: FanoParams,
    /// weight in the score-separation transfer
    pub c_tilde: f64,
    /// codewords whose KL radius is reported
    pub kl_words: usize,
    /// pairs per t in the Taylor and transfer checks
    pub extra_pairs: usize,
    pub heat_rho: Vec<f64>,
    pub two_point_t: Vec<f64>,
    pub two_point_x: usize,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        LowerBoundConfig {
            m: 12,
            t: vec![1e-4, 1e-3, 1e-2],
            alpha: 2.0,
            eps_over_sqrt_t: 0.4,
            fano: FanoParams::default(),
            c_tilde: 10.0,
            kl_words: 8,
            extra_pairs: 8,
            heat_rho: vec![1.0, 0.5, 0.25],
            two_point_t: vec![0.05, 0.5, 2.0],
            two_point_x: 21,
        }
    }
}

/// Everything a run needs. Only `seed` is required in the file; every other key has a
/// default, and the resolved config is echoed next to each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: String,
    /// worker threads; 0 uses every processor
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_density")]
    pub density: DensitySpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default)]
    pub risk: RiskOptions,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub lowerbound: LowerBoundConfig,
}

fn default_out() -> String {
    "out".into()
}

fn default_density() -> DensitySpec {
    DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0)
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            out_dir: default_out(),
            workers: 0,
            density: default_density(),
            grid: GridConfig::default(),
            score: ScoreConfig::default(),
            risk: RiskOptions::default(),
            rates: RatesConfig::default(),
            sampler: SamplerConfig::default(),
            lowerbound: LowerBoundConfig::default(),
        }
    }

    /// Parses and validates; errors name the offending field.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config echo, hex encoded. `out_dir` and `workers` do not
    /// change any result and are left out.
    pub fn hash(&self) -> String {
        let canon = ExperimentConfig { out_dir: String::new(), workers: 0, ..self.clone() };
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config { field: field.into(), msg });
        if self.grid.n.is_empty() {
            return bad("grid.n", "grid is empty".into());
        }
        if let Some(n) = self.grid.n.iter().find(|&&n| n < 2) {
            return bad("grid.n", format!("sample sizes must be at least 2, got {n}"));
        }
        if self.grid.t.is_empty() {
            return bad("grid.t", "grid is empty".into());
        }
        if let Some(t) = self.grid.t.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return bad("grid.t", format!("noise levels must be positive, got {t}"));
        }
        if self.grid.reps < 2 {
            return bad("grid.reps", format!("need at least 2 replications, got {}", self.grid.reps));
        }
        if !(self.grid.alpha > 0.0) {
            return bad("grid.alpha", format!("must be positive, got {}", self.grid.alpha));
        }
        if let Err(e) = AnalyticDensity::new(self.density.clone()) {
            return bad("density", e.to_string());
        }
        let s = &self.score;
        if !(s.c_d > 0.0) || !(s.c_h > 0.0) || !(s.region_c > 0.0) || s.omega_grid < 2 {
            return bad("score", "c_d, c_h and region_c must be positive and omega_grid at least 2".into());
        }
        if !(self.risk.rel_tol > 0.0) {
            return bad("risk.rel_tol", format!("must be positive, got {}", self.risk.rel_tol));
        }
        if !(self.rates.tolerance > 0.0) {
            return bad("rates.tolerance", format!("must be positive, got {}", self.rates.tolerance));
        }
        let sm = &self.sampler;
        if let Err(e) = TimeGrid::geometric(sm.horizon, sm.t_floor, sm.steps) {
            return bad("sampler", e.to_string());
        }
        if sm.m == 0 || sm.bins < 2 || sm.reps == 0 {
            return bad("sampler", "m and reps must be positive and bins at least 2".into());
        }
        let lb = &self.lowerbound;
        if lb.m == 0 {
            return bad("lowerbound.m", "must be at least 1".into());
        }
        if lb.t.is_empty() || lb.t.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("lowerbound.t", "need a nonempty list in (0, 1)".into());
        }
        if lb.two_point_t.iter().any(|t| !(*t > 0.0)) {
            return bad("lowerbound.two_point_t", "noise levels must be positive".into());
        }
        if lb.heat_rho.iter().any(|r| !(*r > 0.0)) {
            return bad("lowerbound.heat_rho", "widths must be positive".into());
        }
        Ok(())
    }

    pub fn sampler_grid(&self) -> TimeGrid {
        TimeGrid::geometric(self.sampler.horizon, self.sampler.t_floor, self.sampler.steps).expect("validated")
    }
}

/// Maps a parse error to the field it concerns: the backquoted name in the message if
/// there is one, otherwise the key on the offending line.
fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let quoted = msg.split('`').nth(1).map(str::to_string);
    let field = quoted.or_else(|| {
        let start = e.span()?.start;
        let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
        let line = text[line_start..].lines().next()?;
        let key = line.split('=').next()?.trim();
        let section = text[..line_start]
            .lines()
            .rev()
            .find_map(|l| l.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')).map(str::to_string));
        Some(match section {
            Some(s) if !key.is_empty() => format!("{s}.{key}"),
            _ => key.to_string(),
        })
    });
    Error::Config { field: field.unwrap_or_else(|| "<root>".into()), msg }
}

/// A column-oriented table destined for CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comment lines (each prefixed with `# `), then the header and the rows.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}").map_err(|e| Error::Io(e.to_string()))?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            out.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_csv_string(&self, comments: &[String]) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, comments)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Shortest round-trip text for a float.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn risk_table(records: &[RiskRecord]) -> Table {
    let mut t = Table::new(&RiskRecord::HEADER);
    for r in records {
        t.push(r.row().to_vec());
    }
    t
}

/// Replicated risk for every `(n, t)` in the grid, n-major.
pub fn run_risk_grid(cfg: &ExperimentConfig) -> Result<Vec<RiskRecord>> {
    let f = AnalyticDensity::new(cfg.density.clone())?;
    let mut out = Vec::new();
    for &n in &cfg.grid.n {
        out.extend(replicate_records(&f, n, &cfg.grid.t, cfg.grid.alpha, cfg.grid.reps, cfg.seed, &cfg.score, &cfg.risk)?);
    }
    Ok(out)
}

/// Theoretical log-log slope of the risk in the given regime.
pub fn expected_slope(regime: Regime, axis: Axis, alpha: f64) -> Option<f64> {
    match (axis, regime) {
        (Axis::VsT, Regime::VeryHigh) => Some(-2.0),
        (Axis::VsT, Regime::High) => Some(-1.5),
        (Axis::VsT, Regime::LowRough) => Some(alpha - 1.0),
        (Axis::VsT, Regime::LowSmooth) => None,
        (Axis::VsN, Regime::VeryHigh | Regime::High) => Some(-1.0),
        (Axis::VsN, Regime::LowSmooth) => Some(-2.0 * (alpha - 1.0) / (2.0 * alpha + 1.0)),
        (Axis::VsN, Regime::LowRough) => Some(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    /// the coordinate held fixed: t for fits against n, n for fits against t
    pub fixed: f64,
    pub regime: Regime,
    pub points: usize,
    pub fit: RateFit,
    pub expected: Option<f64>,
    pub pass: Option<bool>,
}

/// Slopes per regime along the configured axis. Groups with fewer than three points
/// are skipped; if none remains, the call fails.
pub fn run_rates(cfg: &ExperimentConfig, records: &[RiskRecord]) -> Result<Vec<RateRow>> {
    let axis = cfg.rates.axis;
    let mut fixed: Vec<f64> = records.iter().map(|r| if axis == Axis::VsN { r.t } else { r.n as f64 }).collect();
    fixed.sort_by(f64::total_cmp);
    fixed.dedup();
    let mut out = Vec::new();
    for &v in &fixed {
        for regime in [Regime::VeryHigh, Regime::High, Regime::LowSmooth, Regime::LowRough] {
            let mut pts: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.regime == regime && (if axis == Axis::VsN { r.t } else { r.n as f64 }) == v)
                .filter(|r| r.risk_mean > 0.0)
                .map(|r| (if axis == Axis::VsN { r.n as f64 } else { r.t }, r.risk_mean))
                .collect();
            if pts.len() < 3 {
                continue;
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let logs: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
            let fit = fit_rate(&logs, axis)?;
            let expected = cfg.rates.expected.or_else(|| expected_slope(regime, axis, cfg.grid.alpha));
            let pass = expected.map(|e| (fit.slope - e).abs() <= cfg.rates.tolerance);
            out.push(RateRow { fixed: v, regime, points: pts.len(), fit, expected, pass });
        }
    }
    if out.is_empty() {
        return domain("no regime has at least 3 grid points on the fitted axis");
    }
    Ok(out)
}

pub fn rates_table(rows: &[RateRow]) -> Table {
    let mut t = Table::new(&["axis", "fixed", "regime", "points", "slope", "intercept", "r_squared", "expected", "pass"]);
    for r in rows {
        t.push(vec![
            format!("{:?}", r.fit.axis),
            num(r.fixed),
            r.regime.to_string(),
            r.points.to_string(),
            num(r.fit.slope),
            num(r.fit.intercept),
            num(r.fit.r_squared),
            r.expected.map(num).unwrap_or_default(),
            r.pass.map(|p| p.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

/// Fits the estimators on `n` draws and runs the sampler with them.
pub fn sample_fitted(
    f: &AnalyticDensity,
    n: usize,
    alpha: f64,
    score: &ScoreConfig,
    grid: &TimeGrid,
    m: usize,
    data_seed: u64,
    path_seed: u64,
    mode: DriftMode,
) -> Result<SampleBatch> {
    let data = f.sample(n, data_seed);
    let fit = FittedScores::fit(&data, alpha, score)?;
    reverse_sample(&fit, grid, m, path_seed, mode)
}

/// Seeds of replication `rep`: the dataset uses `mix64(seed, rep)` as in the risk grid,
/// the paths a second stream.
pub fn sampler_seeds(seed: u64, rep: usize) -> (u64, u64) {
    (mix64(seed, rep as u64), mix64(mix64(seed, rep as u64), 0x5a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRow {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub m: usize,
    pub tv: f64,
    pub w1: f64,
    pub kl_init: f64,
    pub aborted: usize,
}

pub struct SamplerRun {
    pub horizon: f64,
    pub rows: Vec<SamplerRow>,
    pub batches: Vec<SampleBatch>,
}

pub fn run_sampler(cfg: &ExperimentConfig) -> Result<SamplerRun> {
    let f = AnalyticDensity::new(cfg.density.clone())?;
    let grid = cfg.sampler_grid();
    let kl = kl_init_check(&f, cfg.sampler.horizon)?;
    let mut rows = Vec::new();
    let mut batches = Vec::new();
    for &n in &cfg.grid.n {
        for rep in 0..cfg.sampler.reps {
            let (ds, ps) = sampler_seeds(cfg.seed, rep);
            let b = sample_fitted(&f, n, cfg.grid.alpha, &cfg.score, &grid, cfg.sampler.m, ds, ps, cfg.sampler.drift)?;
            let tv = tv_empirical(&b.values, &f, cfg.sampler.bins)?;
            let w1 = w1_empirical(&b.values, &f)?;
            rows.push(SamplerRow { n, rep, seed: ps, m: b.len(), tv, w1, kl_init: kl, aborted: b.aborted.len() });
            batches.push(b);
        }
    }
    Ok(SamplerRun { horizon: cfg.sampler.horizon, rows, batches })
}

pub fn sampler_table(run: &SamplerRun) -> Table {
    let mut t = Table::new(&["n", "rep", "seed", "m", "tv", "w1", "kl_init", "kl_bound", "aborted"]);
    for r in &run.rows {
        t.push(vec![
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.m.to_string(),
            num(r.tv),
            num(r.w1),
            num(r.kl_init),
            num(0.5 / run.horizon),
            r.aborted.to_string(),
        ]);
    }
    t
}

/// One verification result of the lower-bound suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub t: f64,
    pub m: usize,
    pub c3: f64,
    pub b: Option<usize>,
    pub c: Option<usize>,
    pub value: f64,
    pub reference: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(check: &'static str, t: f64, value: f64, reference: f64, pass: bool) -> Self {
        CheckRow { check, t, m: 0, c3: 0.0, b: None, c: None, value, reference, pass }
    }
}

/// Pairs `(b, c)` spread over the family: the first `k` in lexicographic order after a
/// stride so that large families are sampled evenly.
fn spread_pairs(size: usize, k: usize) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..size).flat_map(|b| (b + 1..size).map(move |c| (b, c))).collect();
    if all.len() <= k {
        return all;
    }
    let stride = all.len() / k;
    all.into_iter().step_by(stride).take(k).collect()
}

/// All lower-bound checks for the configured grid.
pub fn run_lowerbound(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let lb = &cfg.lowerbound;
    let mut rows = Vec::new();
    for &t in &lb.t {
        let eps = lb.eps_over_sqrt_t * t.sqrt();
        let rep = separation_with_escalation(lb.m, t, lb.alpha, eps, &lb.fano)?;
        let fam = &rep.family;
        let tag = |mut r: CheckRow, b: usize, c: usize| {
            r.m = rep.m;
            r.c3 = rep.c3;
            r.b = Some(b);
            r.c = Some(c);
            r
        };
        let grid = SeparationGrid::new(fam, t, Domain::Interior)?;
        for b in 0..fam.size() {
            let v = grid.psi_separation(&fam.codewords[b], &fam.codewords[b]);
            rows.push(tag(CheckRow::new("separation", t, v, 0.0, v == 0.0), b, b));
        }
        for p in &rep.pairs {
            rows.push(tag(CheckRow::new("separation", t, p.separation, p.bound, p.pass), p.b, p.c));
        }
        let full = SeparationGrid::new(fam, t, Domain::FullLine)?;
        for (b, c) in spread_pairs(fam.size(), lb.extra_pairs) {
            let tc = taylor_check(&full, fam, b, c);
            rows.push(tag(CheckRow::new("taylor", t, tc.smoothed, tc.bound, tc.holds), b, c));
            let tr = grid.transfer_check(&fam.codewords[b], &fam.codewords[c], lb.c_tilde);
            rows.push(tag(CheckRow::new("transfer", t, tr.score_sep, tr.bound, tr.holds), b, c));
        }
        for b in 0..fam.size().min(lb.kl_words) {
            let k = kl_radius(fam, b)?;
            rows.push(tag(CheckRow::new("kl_le_chi2", t, k.kl, k.chi2, k.kl <= k.chi2), b, 0));
            let ok = (k.chi2 - k.closed_form).abs() <= 1e-8 * k.closed_form;
            rows.push(tag(CheckRow::new("chi2_closed_form", t, k.chi2, k.closed_form, ok), b, 0));
        }
        for &rho in &lb.heat_rho {
            let (l, r) = heat_identity_check(rho, t)?;
            let ok = (l - r).abs() <= 1e-4 * r.abs() + 1e-12;
            let mut row = CheckRow::new("heat_identity", t, l, r, ok);
            row.c3 = rho;
            rows.push(row);
        }
    }
    for &t in &lb.two_point_t {
        let r = t.sqrt();
        let k = lb.two_point_x.max(2);
        for i in 0..k {
            let x = -1.0 - r + (2.0 + 2.0 * r) * i as f64 / (k - 1) as f64;
            let (l, rr) = two_point_identity(x, t, lb.alpha, 0.3, 1.0)?;
            rows.push(CheckRow::new("two_point_identity", t, l, rr, (l - rr).abs() <= 1e-8 * rr.abs()));
            let (g, d) = (two_point_g(x, t), two_point_g_double(x, t));
            rows.push(CheckRow::new("two_point_double", t, g, d, (g - d).abs() <= 1e-9 * g.abs()));
        }
    }
    Ok(rows)
}

pub fn lowerbound_table(rows: &[CheckRow]) -> Table {
    let mut t = Table::new(&["check", "t", "m", "c3", "b", "b_prime", "value", "bound", "pass"]);
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        t.push(vec![
            r.check.to_string(),
            num(r.t),
            r.m.to_string(),
            num(r.c3),
            opt(r.b),
            opt(r.c),
            num(r.value),
            num(r.reference),
            r.pass.to_string(),
        ]);
    }
    t
}
