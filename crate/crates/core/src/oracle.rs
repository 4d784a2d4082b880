//! Ground truth for the smoothed density `p = phi_t * f`, its derivative `psi`
//! and the score `s = psi / p`.
//!
//! All internal sums carry the factor `exp(support_shift(x, t))` so that far-tail
//! ratios stay finite; `log_p` undoes the shift.

use crate::density::{AnalyticDensity, Bump};
use crate::error::{domain, Result};
use crate::gaussian::{log_phi, phi_shifted, support_dist, unit_mass_shifted};
use crate::quadrature::gl16;
use std::sync::Arc;

/// Exponent budget: terms below `exp(-WINDOW_EXP)` relative to the peak are dropped.
const WINDOW_EXP: f64 = 40.0;
/// Bump integrals use panels of width `min(width / BUMP_PANELS, sqrt t, 0.1)`;
/// the flat mollifier edge needs this many to reach 1e-10.
pub const BUMP_PANELS: f64 = 16.0;
/// Densities with more bumps than this get tabulated bump convolutions per t.
const TABULATE_ABOVE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothed {
    pub p: f64,
    pub psi: f64,
    pub s: f64,
    pub log_p: f64,
}

/// Shifted values: true `p = p * exp(-shift)`, same for `psi`.
#[derive(Debug, Clone, Copy)]
struct Shifted {
    p: f64,
    psi: f64,
    shift: f64,
}

impl Shifted {
    fn finish(self) -> Smoothed {
        let scale = (-self.shift).exp();
        Smoothed { p: self.p * scale, psi: self.psi * scale, s: self.psi / self.p, log_p: self.p.ln() - self.shift }
    }
}

#[derive(Debug, Clone)]
pub struct NoisyDensityOracle {
    density: Arc<AnalyticDensity>,
}

/// Half-width of the integration window around x.
#[inline]
fn window(x: f64, t: f64) -> f64 {
    let d = (x.abs() - 1.0).max(0.0);
    (d * d + 2.0 * WINDOW_EXP * t).sqrt()
}

/// Shifted `(int phi_t(x-mu) b(mu), int phi_t'(x-mu) b(mu))` over the bump support.
fn bump_conv(b: &Bump, x: f64, t: f64, d: f64) -> (f64, f64) {
    let wdw = window(x, t);
    let lo = b.lo().max(x - wdw);
    let hi = b.hi().min(x + wdw);
    if hi <= lo {
        return (0.0, 0.0);
    }
    let width = (b.width / BUMP_PANELS).min(t.sqrt()).min(0.1);
    let k = ((hi - lo) / width).ceil().max(1.0) as usize;
    let step = (hi - lo) / k as f64;
    let half = 0.5 * step;
    let (mut p, mut psi) = (0.0, 0.0);
    for j in 0..k {
        let mid = lo + (j as f64 + 0.5) * step;
        for &(u, wt) in gl16() {
            let mu = mid + half * u;
            let v = wt * b.value(mu) * phi_shifted(x - mu, t, d);
            p += v;
            psi += v * (mu - x) / t;
        }
    }
    (half * p, half * psi)
}

impl NoisyDensityOracle {
    pub fn new(density: AnalyticDensity) -> Self {
        NoisyDensityOracle { density: Arc::new(density) }
    }

    pub fn from_arc(density: Arc<AnalyticDensity>) -> Self {
        NoisyDensityOracle { density }
    }

    pub fn density(&self) -> &AnalyticDensity {
        &self.density
    }

    pub fn density_arc(&self) -> Arc<AnalyticDensity> {
        self.density.clone()
    }

    fn closed_parts(&self, x: f64, t: f64, d: f64) -> (f64, f64) {
        let m = unit_mass_shifted(x, t);
        let ep = phi_shifted(x + 1.0, t, d);
        let em = phi_shifted(x - 1.0, t, d);
        let mut p = 0.5 * m;
        let mut psi = 0.5 * (ep - em);
        let a = self.density.slope();
        if a != 0.0 {
            p += a * (x * m + t * (ep - em));
            psi += a * (m - ep - em);
        }
        (p, psi)
    }

    fn shifted(&self, x: f64, t: f64) -> Shifted {
        let d = support_dist(x);
        let shift = d * d / (2.0 * t);
        let (mut p, mut psi) = self.closed_parts(x, t, d);
        let wdw = window(x, t);
        for b in self.density.bumps_in(x - wdw, x + wdw) {
            let (bp, bpsi) = bump_conv(b, x, t, d);
            p += bp;
            psi += bpsi;
        }
        Shifted { p, psi, shift }
    }

    /// `(p, psi, s)` at `(x, t)`.
    pub fn p_psi_s(&self, x: f64, t: f64) -> Result<Smoothed> {
        if !(t > 0.0) {
            return domain(format!("noise scale must be positive, got {t}"));
        }
        Ok(self.shifted(x, t).finish())
    }

    /// Score through Tweedie's formula, `(E[theta | x] - x) / t`, with both moments by quadrature of the whole density.
    pub fn tweedie_score(&self, x: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("noise scale must be positive, got {t}"));
        }
        let dist = support_dist(x);
        let wdw = window(x, t);
        let lo = (-1.0f64).max(x - wdw);
        let hi = 1.0f64.min(x + wdw);
        if hi <= lo {
            return Ok(self.shifted(x, t).finish().s);
        }
        let d = &self.density;
        let width = (d.length_scale() / BUMP_PANELS).min(t.sqrt()).min(0.1);
        let mut br: Vec<f64> = d.bumps_in(lo, hi).flat_map(|b| [b.lo(), b.center, b.hi()]).collect();
        br.push(0.0);
        let rule = crate::quadrature::PanelRule::new(lo, hi, width, &br);
        let (mut m0, mut m1) = (0.0, 0.0);
        for (&mu, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = w * d.eval(mu) * phi_shifted(x - mu, t, dist);
            m0 += v;
            m1 += v * (mu - x);
        }
        Ok(m1 / m0 / t)
    }

    /// Evaluator specialised to one noise level.
    pub fn at(&self, t: f64) -> OracleSlice<'_> {
        let tables = if self.density.bumps().len() > TABULATE_ABOVE {
            let mut widths: Vec<f64> = self.density.bumps().iter().map(|b| b.width).collect();
            widths.sort_by(f64::total_cmp);
            widths.dedup();
            widths.into_iter().map(|r| BumpTable::new(r, t)).collect()
        } else {
            Vec::new()
        };
        OracleSlice { oracle: self, t, tables }
    }
}

/// Cubic Hermite table of `G(y) = int phi_t(y - v) w(v / r) dv` and its first two derivatives.
#[derive(Debug, Clone)]
struct BumpTable {
    width: f64,
    y0: f64,
    step: f64,
    g: Vec<[f64; 3]>,
}

impl BumpTable {
    fn new(r: f64, t: f64) -> Self {
        let reach = r + (2.0 * WINDOW_EXP * t).sqrt();
        let step = t.sqrt() / 32.0;
        let n = (2.0 * reach / step).ceil() as usize + 1;
        let y0 = -reach;
        let unit = Bump { center: 0.0, width: r, coef: 1.0 };
        let panel = (r / BUMP_PANELS).min(t.sqrt()).min(0.1);
        let wdw = (2.0 * WINDOW_EXP * t).sqrt();
        let g = (0..n)
            .map(|i| {
                let y = y0 + i as f64 * step;
                let lo = (-r).max(y - wdw);
                let hi = r.min(y + wdw);
                let mut acc = [0.0; 3];
                if hi > lo {
                    let k = ((hi - lo) / panel).ceil().max(1.0) as usize;
                    let h = (hi - lo) / k as f64;
                    for j in 0..k {
                        let mid = lo + (j as f64 + 0.5) * h;
                        for &(u, wt) in gl16() {
                            let v = mid + 0.5 * h * u;
                            let z = y - v;
                            let base = 0.5 * h * wt * unit.value(v) * log_phi(z, t).exp();
                            acc[0] += base;
                            acc[1] += -base * z / t;
                            acc[2] += base * (z * z / (t * t) - 1.0 / t);
                        }
                    }
                }
                acc
            })
            .collect();
        BumpTable { width: r, y0, step, g }
    }

    /// `(G(y), G'(y))`.
    #[inline]
    fn eval(&self, y: f64) -> (f64, f64) {
        let pos = (y - self.y0) / self.step;
        if pos < 0.0 || pos >= (self.g.len() - 1) as f64 {
            return (0.0, 0.0);
        }
        let i = pos as usize;
        let s = pos - i as f64;
        let a = &self.g[i];
        let b = &self.g[i + 1];
        let h = self.step;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let g = h00 * a[0] + h10 * h * a[1] + h01 * b[0] + h11 * h * b[1];
        let g1 = h00 * a[1] + h10 * h * a[2] + h01 * b[1] + h11 * h * b[2];
        (g, g1)
    }
}

/// Oracle at a fixed noise level; tabulates bump convolutions for many-bump densities.
#[derive(Debug, Clone)]
pub struct OracleSlice<'a> {
    oracle: &'a NoisyDensityOracle,
    t: f64,
    tables: Vec<BumpTable>,
}

impl OracleSlice<'_> {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn eval(&self, x: f64) -> Smoothed {
        if self.tables.is_empty() || x.abs() > 1.0 {
            return self.oracle.shifted(x, self.t).finish();
        }
        let t = self.t;
        let (mut p, mut psi) = self.oracle.closed_parts(x, t, 0.0);
        let wdw = window(x, t);
        for b in self.oracle.density.bumps_in(x - wdw, x + wdw) {
            let tab = self.tables.iter().find(|tb| tb.width == b.width).expect("table per width");
            let (g, g1) = tab.eval(x - b.center);
            p += b.coef * g;
            psi += b.coef * g1;
        }
        Shifted { p, psi, shift: 0.0 }.finish()
    }

    pub fn score(&self, x: f64) -> f64 {
        self.eval(x).s
    }
}
