//! The regime-specific score estimators and the dispatcher.

use crate::density::{AnalyticDensity, Dataset};
use crate::error::{domain, Error, Result};
use crate::gaussian::{phi_shifted, support_dist, uniform_score, unit_mass, unit_mass_shifted, C_D_LOWER};
use crate::kernel::KdeModel;
use crate::quadrature::PanelRule;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    VeryHigh,
    High,
    LowSmooth,
    LowRough,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::VeryHigh => "very_high",
            Regime::High => "high",
            Regime::LowSmooth => "low_smooth",
            Regime::LowRough => "low_rough",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    D1,
    D2,
    D3,
}

/// Half-width of the internal region, `1 - sqrt(C t log(1/t))` with `log(1/t)` clamped at 0.
pub fn d1_edge(t: f64, c: f64) -> f64 {
    1.0 - (c * t * (1.0 / t).ln().max(0.0)).sqrt()
}

/// Outer edge of the boundary region, `1 + C sqrt t`.
pub fn d2_edge(t: f64, c: f64) -> f64 {
    1.0 + c * t.sqrt()
}

pub fn region(x: f64, t: f64, c: f64) -> Region {
    let ax = x.abs();
    if ax < d1_edge(t, c) {
        Region::D1
    } else if ax <= d2_edge(t, c) {
        Region::D2
    } else {
        Region::D3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub c_d: f64,
    /// region constant C
    pub region_c: f64,
    pub t_switch_high: f64,
    /// replaces `n^(-2/(2 alpha + 1))` as the low/high split when set
    pub t_switch_low: Option<f64>,
    /// bandwidth multiplier c_h
    pub c_h: f64,
    pub omega_grid: usize,
    /// cap on the panel width of the low-noise convolution rule
    pub panel_cap: f64,
}

impl ScoreConfig {
    pub fn bounds(&self, n: usize, alpha: f64) -> RegimeBounds {
        let mut b = RegimeBounds::new(n, alpha, self.t_switch_high);
        if let Some(t) = self.t_switch_low {
            b.t_low = t;
        }
        b
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { c_d: C_D_LOWER, region_c: 4.0, t_switch_high: 1.0, t_switch_low: None, c_h: 1.0, omega_grid: 2048, panel_cap: 0.05 }
    }
}

/// Anything the low-noise estimator can use in place of the kernel estimate.
pub trait DensityEstimate: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    /// Length scale bounding the convolution panel width.
    fn length_scale(&self) -> f64;
}

impl DensityEstimate for KdeModel {
    fn value(&self, x: f64) -> f64 {
        self.eval_unchecked(x, 0)
    }
    fn deriv(&self, x: f64) -> f64 {
        self.eval_unchecked(x, 1)
    }
    fn length_scale(&self) -> f64 {
        self.h()
    }
}

impl DensityEstimate for AnalyticDensity {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        AnalyticDensity::deriv(self, x)
    }
    fn length_scale(&self) -> f64 {
        AnalyticDensity::length_scale(self) / 8.0
    }
}

/// `lambda * inner`, used to check ratio homogeneity.
#[derive(Debug)]
pub struct ScaledEstimate<E> {
    pub lambda: f64,
    pub inner: E,
}

impl<E: DensityEstimate> DensityEstimate for ScaledEstimate<E> {
    fn value(&self, x: f64) -> f64 {
        self.lambda * self.inner.value(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        self.lambda * self.inner.deriv(x)
    }
    fn length_scale(&self) -> f64 {
        self.inner.length_scale()
    }
}

/// Shifted empirical sums `(1/n) sum phi_t(x - mu)` and `(1/n) sum mu phi_t(x - mu)`.
#[inline]
fn data_sums(data: &[f64], x: f64, t: f64, d: f64) -> (f64, f64) {
    let (mut s0, mut s1) = (0.0, 0.0);
    for &mu in data {
        let v = phi_shifted(x - mu, t, d);
        s0 += v;
        s1 += mu * v;
    }
    let n = data.len() as f64;
    (s0 / n, s1 / n)
}

/// `(p_hat, psi_hat)` of the very-high-noise estimator, both scaled by `exp(support_shift(x, t))`.
pub fn very_high_parts(data: &[f64], x: f64, t: f64, c_d: f64) -> (f64, f64) {
    let (s0, s1) = data_sums(data, x, t, support_dist(x));
    let p = (c_d * unit_mass_shifted(x, t)).max(s0);
    (p, -(x / t) * p + s1 / t)
}

#[inline]
fn very_high_raw(data: &[f64], x: f64, t: f64, c_d: f64) -> f64 {
    let (p, psi) = very_high_parts(data, x, t, c_d);
    psi / p
}

#[inline]
fn high_raw(data: &[f64], x: f64, t: f64, c_d: f64) -> f64 {
    let (s0, s1) = data_sums(data, x, t, support_dist(x));
    let psi = (s1 - x * s0) / t;
    psi / s0.max(c_d * unit_mass_shifted(x, t))
}

fn check_data(data: &Dataset, t: f64) -> Result<()> {
    if data.is_empty() {
        return domain("empty dataset");
    }
    if !(t > 0.0) {
        return domain(format!("noise scale must be positive, got {t}"));
    }
    Ok(())
}

pub fn score_very_high(data: &Dataset, x: f64, t: f64, c_d: f64) -> Result<f64> {
    check_data(data, t)?;
    Ok(very_high_raw(&data.values, x, t, c_d))
}

pub fn score_high(data: &Dataset, x: f64, t: f64, c_d: f64) -> Result<f64> {
    check_data(data, t)?;
    Ok(high_raw(&data.values, x, t, c_d))
}

pub fn score_low_rough(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("noise scale must be positive, got {t}"));
    }
    Ok(uniform_score(x, t))
}

/// Low-noise estimator state shared across noise levels.
#[derive(Debug, Clone)]
pub struct LowState {
    est: Arc<dyn DensityEstimate>,
    omega: bool,
    f_left: f64,
    f_right: f64,
}

impl LowState {
    pub fn new(est: Arc<dyn DensityEstimate>, c_d: f64, omega_grid: usize) -> Self {
        let g = omega_grid.max(2);
        let omega = (0..g).all(|i| est.value(-1.0 + 2.0 * i as f64 / (g - 1) as f64) >= 0.5 * c_d);
        Self::with_omega(est, omega)
    }

    pub fn with_omega(est: Arc<dyn DensityEstimate>, omega: bool) -> Self {
        let f_left = est.value(-1.0);
        let f_right = est.value(1.0);
        LowState { est, omega, f_left, f_right }
    }

    pub fn omega(&self) -> bool {
        self.omega
    }

    pub fn estimate(&self) -> &Arc<dyn DensityEstimate> {
        &self.est
    }

    /// Node cache for one noise level.
    pub fn slice(&self, t: f64, cfg: &ScoreConfig) -> LowSlice {
        let width = t.sqrt().min(self.est.length_scale()).min(cfg.panel_cap);
        let rule = PanelRule::new(-1.0, 1.0, width, &[0.0]);
        let mut wf = Vec::with_capacity(rule.len());
        let mut wd = Vec::with_capacity(rule.len());
        for (&mu, &w) in rule.nodes.iter().zip(&rule.weights) {
            wf.push(w * self.est.value(mu));
            wd.push(w * self.est.deriv(mu));
        }
        LowSlice {
            t,
            c_d: cfg.c_d,
            region_c: cfg.region_c,
            nodes: rule.nodes,
            wf,
            wd,
            f_left: self.f_left,
            f_right: self.f_right,
            omega: self.omega,
        }
    }
}

/// Low-noise estimator at a fixed t with `f_hat`, `f_hat'` cached at quadrature nodes.
#[derive(Debug, Clone)]
pub struct LowSlice {
    t: f64,
    c_d: f64,
    region_c: f64,
    nodes: Vec<f64>,
    wf: Vec<f64>,
    wd: Vec<f64>,
    f_left: f64,
    f_right: f64,
    omega: bool,
}

impl LowSlice {
    /// Number of quadrature nodes Q.
    pub fn nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Shifted `(phi_t * f_hat, psi_hat)` at x, scaled by `exp(d^2 / 2t)` with `d = dist(x, [-1, 1])`.
    pub fn parts(&self, x: f64) -> (f64, f64) {
        let t = self.t;
        let d = support_dist(x);
        let reach = (d * d + 80.0 * t).sqrt();
        let a = self.nodes.partition_point(|&m| m < x - reach);
        let b = self.nodes.partition_point(|&m| m <= x + reach);
        let (mut conv, mut dconv) = (0.0, 0.0);
        for q in a..b {
            let g = phi_shifted(x - self.nodes[q], t, d);
            conv += self.wf[q] * g;
            dconv += self.wd[q] * g;
        }
        let psi = phi_shifted(x + 1.0, t, d) * self.f_left - phi_shifted(x - 1.0, t, d) * self.f_right + dconv;
        (conv, psi)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = self.t;
        match region(x, t, self.region_c) {
            Region::D1 => {
                let (conv, psi) = self.parts(x);
                psi / conv.max(self.c_d * unit_mass(x, t))
            }
            _ => {
                if !self.omega {
                    return uniform_score(x, t);
                }
                let (conv, psi) = self.parts(x);
                let s = psi / conv;
                if conv > 0.0 && s.is_finite() {
                    s
                } else {
                    uniform_score(x, t)
                }
            }
        }
    }
}

/// A score estimator evaluated at one noise level.
#[derive(Debug, Clone)]
pub enum ScoreSlice {
    VeryHigh { data: Arc<Vec<f64>>, t: f64, c_d: f64 },
    High { data: Arc<Vec<f64>>, t: f64, c_d: f64 },
    LowSmooth(LowSlice),
    LowRough { t: f64 },
}

impl ScoreSlice {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScoreSlice::VeryHigh { data, t, c_d } => very_high_raw(data, x, *t, *c_d),
            ScoreSlice::High { data, t, c_d } => high_raw(data, x, *t, *c_d),
            ScoreSlice::LowSmooth(s) => s.eval(x),
            ScoreSlice::LowRough { t } => uniform_score(x, *t),
        }
    }

    pub fn regime(&self) -> Regime {
        match self {
            ScoreSlice::VeryHigh { .. } => Regime::VeryHigh,
            ScoreSlice::High { .. } => Regime::High,
            ScoreSlice::LowSmooth(_) => Regime::LowSmooth,
            ScoreSlice::LowRough { .. } => Regime::LowRough,
        }
    }
}

/// Regime boundaries: low/high split at `n^(-2/(2 alpha + 1))`, high/very-high at `t_switch_high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeBounds {
    pub t_low: f64,
    pub t_high: f64,
    pub alpha: f64,
}

impl RegimeBounds {
    pub fn new(n: usize, alpha: f64, t_high: f64) -> Self {
        RegimeBounds { t_low: (n as f64).powf(-2.0 / (2.0 * alpha + 1.0)), t_high, alpha }
    }

    pub fn regime(&self, t: f64) -> Regime {
        if t >= self.t_high {
            Regime::VeryHigh
        } else if t >= self.t_low {
            Regime::High
        } else if self.alpha >= 1.0 {
            Regime::LowSmooth
        } else {
            Regime::LowRough
        }
    }
}

/// Estimators for every regime fitted once from a dataset.
#[derive(Debug, Clone)]
pub struct FittedScores {
    data: Arc<Vec<f64>>,
    alpha: f64,
    cfg: ScoreConfig,
    bounds: RegimeBounds,
    low: Option<Arc<LowState>>,
}

impl FittedScores {
    pub fn fit(data: &Dataset, alpha: f64, cfg: &ScoreConfig) -> Result<Self> {
        if data.is_empty() {
            return domain("empty dataset");
        }
        let bounds = cfg.bounds(data.len(), alpha);
        let low = if alpha >= 1.0 {
            let kde = KdeModel::fit(data, alpha, cfg.c_h)?;
            Some(Arc::new(LowState::new(Arc::new(kde), cfg.c_d, cfg.omega_grid)))
        } else {
            None
        };
        Ok(FittedScores { data: Arc::new(data.values.clone()), alpha, cfg: cfg.clone(), bounds, low })
    }

    /// Same data, but the low-noise estimator uses `est` in place of the kernel estimate.
    pub fn with_estimate(data: &Dataset, alpha: f64, cfg: &ScoreConfig, est: Arc<dyn DensityEstimate>) -> Result<Self> {
        let mut f = Self::fit(data, alpha.max(1.0), cfg)?;
        f.alpha = alpha;
        f.bounds = cfg.bounds(data.len(), alpha);
        f.low = Some(Arc::new(LowState::new(est, cfg.c_d, cfg.omega_grid)));
        Ok(f)
    }

    pub fn bounds(&self) -> RegimeBounds {
        self.bounds
    }

    pub fn omega(&self) -> Option<bool> {
        self.low.as_ref().map(|l| l.omega)
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.cfg
    }

    pub fn low_state(&self) -> Option<&Arc<LowState>> {
        self.low.as_ref()
    }

    pub fn model(&self, t: f64) -> ScoreModel {
        ScoreModel {
            regime: self.bounds.regime(t),
            bounds: self.bounds,
            cfg: self.cfg.clone(),
            data: self.data.clone(),
            low: self.low.clone(),
        }
    }

    pub fn slice(&self, t: f64) -> ScoreSlice {
        match self.bounds.regime(t) {
            Regime::VeryHigh => ScoreSlice::VeryHigh { data: self.data.clone(), t, c_d: self.cfg.c_d },
            Regime::High => ScoreSlice::High { data: self.data.clone(), t, c_d: self.cfg.c_d },
            Regime::LowSmooth => {
                ScoreSlice::LowSmooth(self.low.as_ref().expect("alpha >= 1 has a kernel estimate").slice(t, &self.cfg))
            }
            Regime::LowRough => ScoreSlice::LowRough { t },
        }
    }
}

/// A fitted estimator tagged with the regime it was dispatched to.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    pub regime: Regime,
    pub bounds: RegimeBounds,
    cfg: ScoreConfig,
    data: Arc<Vec<f64>>,
    low: Option<Arc<LowState>>,
}

/// Fit and tag the estimator for noise level t.
pub fn dispatch(data: &Dataset, alpha: f64, t: f64, cfg: &ScoreConfig) -> Result<ScoreModel> {
    if !(t > 0.0) {
        return domain(format!("noise scale must be positive, got {t}"));
    }
    Ok(FittedScores::fit(data, alpha, cfg)?.model(t))
}

impl ScoreModel {
    pub fn omega(&self) -> Option<bool> {
        self.low.as_ref().map(|l| l.omega)
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(t > 0.0) {
            return domain(format!("noise scale must be positive, got {t}"));
        }
        let r = self.bounds.regime(t);
        if r != self.regime {
            return Err(Error::WrongRegime(format!("model dispatched as {} evaluated at t = {t} ({r})", self.regime)));
        }
        Ok(())
    }

    /// Prepare the estimator at t (builds the node cache in the low-noise regime).
    pub fn slice(&self, t: f64) -> Result<ScoreSlice> {
        self.check(t)?;
        Ok(match self.regime {
            Regime::VeryHigh => ScoreSlice::VeryHigh { data: self.data.clone(), t, c_d: self.cfg.c_d },
            Regime::High => ScoreSlice::High { data: self.data.clone(), t, c_d: self.cfg.c_d },
            Regime::LowSmooth => ScoreSlice::LowSmooth(
                self.low.as_ref().ok_or_else(|| Error::WrongRegime("no kernel estimate".into()))?.slice(t, &self.cfg),
            ),
            Regime::LowRough => ScoreSlice::LowRough { t },
        })
    }

    /// `s_hat(x, t)`; rebuilds per-t state on every call, use `slice` for repeated evaluation.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.slice(t)?.eval(x))
    }
}

/// Low-noise estimator evaluated directly; errors for `alpha < 1`.
pub fn score_low_smooth(model: &ScoreModel, x: f64, t: f64) -> Result<f64> {
    if model.bounds.alpha < 1.0 {
        return Err(Error::WrongRegime(format!("alpha = {} < 1 has no low-noise kernel estimator", model.bounds.alpha)));
    }
    if model.regime != Regime::LowSmooth {
        return Err(Error::WrongRegime(format!("model dispatched as {}", model.regime)));
    }
    model.eval(x, t)
}
