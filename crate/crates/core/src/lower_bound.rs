//! Numerical checks of the lower-bound constructions: the Fano family of bump
//! perturbations, derivative separations under the heat flow, KL radii and the
//! two-point construction for large noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bump::{self, norms};
use crate::density::{AnalyticDensity, DensityKind, DensitySpec, HOLDER_L};
use crate::error::{domain, Error, Result};
use crate::gaussian::{phi, unit_mass};
use crate::oracle::NoisyDensityOracle;
use crate::quadrature::{breakpoints, integrate, PanelRule};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FanoParams {
    pub c3: f64,
    /// grid margin in units of rho
    pub c_margin: f64,
    /// constant in the interior interval
    pub region_c: f64,
    pub attempts: usize,
    pub seed: u64,
}

impl Default for FanoParams {
    fn default() -> Self {
        FanoParams { c3: 4.0, c_margin: 2.0, region_c: 4.0, attempts: 2000, seed: 0x5eed }
    }
}

/// `I = [-1 + r, 1 - r]` with `r = sqrt(C t log(1/t))`, log clamped at 0.
pub fn interior_interval(t: f64, c: f64) -> (f64, f64) {
    let r = if t > 0.0 { (c * t * (1.0 / t).ln().max(0.0)).sqrt() } else { 0.0 };
    (-1.0 + r, 1.0 - r)
}

/// `f_b = 1/2 + eps^alpha sum_i b_i w((mu - x_i) / rho)` for codewords `b` in `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoFamily {
    pub m: usize,
    pub t: f64,
    pub alpha: f64,
    pub eps: f64,
    pub rho: f64,
    pub centers: Vec<f64>,
    pub codewords: Vec<Vec<u8>>,
    pub min_distance: usize,
    pub interval: (f64, f64),
    pub params: FanoParams,
}

/// Largest m whose grid fits for the given t and eps.
pub fn max_grid_points(t: f64, eps: f64, p: &FanoParams) -> usize {
    let rho = (p.c3 * t.sqrt()).max(eps);
    let (lo, hi) = interior_interval(t, p.region_c);
    let room = (hi - lo) - 2.0 * p.c_margin * rho;
    if !(rho > 0.0 && rho < 1.0) || room < 0.0 {
        return 0;
    }
    (room / (2.0 * rho)).floor() as usize + 1
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Greedy random codebook: random words are kept when they are at distance at least
/// `d_min` from every kept word; stops after `attempts` consecutive rejections.
pub fn greedy_code(m: usize, d_min: usize, attempts: usize, seed: u64) -> Vec<Vec<u8>> {
    if m == 1 {
        return vec![vec![0], vec![1]];
    }
    let mut rng = seed::rng(seed);
    let mut code = vec![vec![0u8; m]];
    let mut fails = 0;
    while fails < attempts {
        let word: Vec<u8> = (0..m).map(|_| rng.random_range(0..2u8)).collect();
        if code.iter().all(|c| hamming(c, &word) >= d_min) {
            code.push(word);
            fails = 0;
        } else {
            fails += 1;
        }
    }
    code
}

pub fn build_fano(m: usize, t: f64, alpha: f64, eps: f64, p: &FanoParams) -> Result<FanoFamily> {
    if m == 0 {
        return Err(Error::Construction("m must be at least 1".into()));
    }
    if !(t >= 0.0) || !(eps > 0.0) || !(alpha > 0.0) {
        return Err(Error::Construction(format!("need t >= 0, eps > 0, alpha > 0 (t={t}, eps={eps}, alpha={alpha})")));
    }
    let rho = (p.c3 * t.sqrt()).max(eps);
    if rho >= 1.0 {
        return Err(Error::Construction(format!("rho = {rho:.4} must be below 1")));
    }
    let interval = interior_interval(t, p.region_c);
    let span = interval.1 - p.c_margin * rho;
    if span < 0.0 {
        return Err(Error::Construction(format!(
            "margin {}*rho = {:.4} leaves no room inside I = [{:.4}, {:.4}]",
            p.c_margin,
            p.c_margin * rho,
            interval.0,
            interval.1
        )));
    }
    let need = (m - 1) as f64 * rho;
    if need > span {
        return Err(Error::Construction(format!(
            "{m} points with spacing 2rho = {:.4} need half-width {need:.4}, only {span:.4} available (max m = {})",
            2.0 * rho,
            max_grid_points(t, eps, p)
        )));
    }
    let centers: Vec<f64> = (0..m).map(|i| -need + 2.0 * rho * i as f64).collect();
    let d_min = m.div_ceil(4);
    let codewords = greedy_code(m, d_min, p.attempts, p.seed);
    let mut min_distance = usize::MAX;
    for i in 0..codewords.len() {
        for j in i + 1..codewords.len() {
            min_distance = min_distance.min(hamming(&codewords[i], &codewords[j]));
        }
    }
    let fam = FanoFamily { m, t, alpha, eps, rho, centers, codewords, min_distance, interval, params: *p };
    for b in 0..fam.codewords.len() {
        fam.density(b)?.check_membership(HOLDER_L)?;
    }
    Ok(fam)
}

impl FanoFamily {
    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    pub fn log_size(&self) -> f64 {
        (self.codewords.len() as f64).ln()
    }

    pub fn amplitude(&self) -> f64 {
        self.eps.powf(self.alpha)
    }

    pub fn spec(&self, b: usize) -> DensitySpec {
        DensitySpec {
            kind: DensityKind::BumpPerturbed,
            alpha: self.alpha,
            eps: self.eps,
            rho: self.rho,
            centers: self.centers.clone(),
            signs: self.codewords[b].iter().map(|&v| v as i8).collect(),
            levels: 1,
            seed: 0,
        }
    }

    pub fn density(&self, b: usize) -> Result<AnalyticDensity> {
        AnalyticDensity::new(self.spec(b))
    }

    pub fn distance(&self, b: usize, c: usize) -> usize {
        hamming(&self.codewords[b], &self.codewords[c])
    }

    /// `d_Ham * eps^(2 alpha) / rho * ||w'||^2`, the exact separation at t = 0.
    pub fn separation_scale(&self, d: usize) -> f64 {
        d as f64 * self.amplitude().powi(2) / self.rho * norms().w1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Interior,
    FullLine,
}

/// `(phi_t * w_i^(k))(x)` for the bump `w((mu - c) / rho)`, `k` in {0, 1}.
fn bump_conv(c: f64, rho: f64, x: f64, t: f64, k: usize) -> f64 {
    let shape = |u: f64| if k == 0 { bump::w(u) } else { bump::w1(u) / rho };
    if t == 0.0 {
        return shape((x - c) / rho);
    }
    let s = t.sqrt();
    if (x - c).abs() > rho + 14.0 * s {
        return 0.0;
    }
    let lo = (c - rho).max(x - 14.0 * s);
    let hi = (c + rho).min(x + 14.0 * s);
    if hi <= lo {
        return 0.0;
    }
    PanelRule::new(lo, hi, (rho / 32.0).min(s / 4.0), &[]).integrate(|mu| shape((mu - c) / rho) * phi(x - mu, t))
}

/// Per-bump smoothed profiles on a fixed quadrature rule, so that every pairwise
/// quantity is a finite sum.
#[derive(Debug, Clone)]
pub struct SeparationGrid {
    pub t: f64,
    pub domain: Domain,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `u[i][q] = (phi_t * w_i)(x_q)`
    u: Vec<Vec<f64>>,
    /// `v[i][q] = (phi_t * w_i')(x_q)`
    v: Vec<Vec<f64>>,
    p0: Vec<f64>,
    psi0: Vec<f64>,
    amp: f64,
    /// `gram[i][j] = int v_i v_j`
    gram: Vec<Vec<f64>>,
}

impl SeparationGrid {
    pub fn new(fam: &FanoFamily, t: f64, domain: Domain) -> Result<Self> {
        if !(t >= 0.0) {
            return domain_err(t);
        }
        let rho = fam.rho;
        let s = t.sqrt();
        let (a, b) = match domain {
            Domain::Interior => interior_interval(t, fam.params.region_c),
            Domain::FullLine => {
                let first = fam.centers[0] - rho - 14.0 * s;
                let last = fam.centers[fam.m - 1] + rho + 14.0 * s;
                (first, last)
            }
        };
        let mut breaks: Vec<f64> = fam.centers.iter().flat_map(|&c| [c - rho, c + rho]).collect();
        breaks.extend([-1.0, 1.0]);
        let width = if t > 0.0 { (rho / 32.0).min(s / 4.0) } else { rho / 32.0 };
        let rule = PanelRule::new(a, b, width, &breaks);
        let prof = |k: usize| -> Vec<Vec<f64>> {
            fam.centers.iter().map(|&c| rule.nodes.iter().map(|&x| bump_conv(c, rho, x, t, k)).collect()).collect()
        };
        let u = prof(0);
        let v = prof(1);
        let (p0, psi0): (Vec<f64>, Vec<f64>) = rule
            .nodes
            .iter()
            .map(|&x| {
                if t == 0.0 {
                    (if x.abs() <= 1.0 { 0.5 } else { 0.0 }, 0.0)
                } else {
                    (0.5 * unit_mass(x, t), 0.5 * (phi(x + 1.0, t) - phi(x - 1.0, t)))
                }
            })
            .unzip();
        let m = fam.m;
        let mut gram = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let g: f64 = rule.weights.iter().enumerate().map(|(q, w)| w * v[i][q] * v[j][q]).sum();
                gram[i][j] = g;
                gram[j][i] = g;
            }
        }
        Ok(SeparationGrid {
            t,
            domain,
            nodes: rule.nodes,
            weights: rule.weights,
            u,
            v,
            p0,
            psi0,
            amp: fam.amplitude(),
            gram,
        })
    }

    /// `int |psi_b - psi_c|^2` over the domain.
    pub fn psi_separation(&self, b: &[u8], c: &[u8]) -> f64 {
        let d: Vec<f64> = b.iter().zip(c).map(|(&x, &y)| x as f64 - y as f64).collect();
        let mut s = 0.0;
        for i in 0..d.len() {
            if d[i] == 0.0 {
                continue;
            }
            for j in 0..d.len() {
                s += d[i] * d[j] * self.gram[i][j];
            }
        }
        self.amp * self.amp * s
    }

    fn fields(&self, b: &[u8], q: usize) -> (f64, f64) {
        let mut p = self.p0[q];
        let mut psi = self.psi0[q];
        for (i, &bi) in b.iter().enumerate() {
            if bi != 0 {
                p += self.amp * self.u[i][q];
                psi += self.amp * self.v[i][q];
            }
        }
        (p, psi)
    }

    /// The score-separation transfer with weights `(1 - 1/C, C)`.
    pub fn transfer_check(&self, b: &[u8], c: &[u8], c_tilde: f64) -> TransferReport {
        let (mut score_sep, mut cross, mut psi_sep, mut slack, mut weighted) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut pmin, mut pp_min, mut pp_max) = (f64::INFINITY, f64::INFINITY, 0.0f64);
        for (q, &w) in self.weights.iter().enumerate() {
            let (pb, sb) = self.fields(b, q);
            let (pc, sc) = self.fields(c, q);
            score_sep += w * (sb / pb - sc / pc).powi(2);
            cross += w * (sb * pc - sc * pb).powi(2);
            psi_sep += w * (sb - sc).powi(2);
            slack += w * (sc * (pc - pb)).powi(2);
            weighted += w * ((1.0 - 1.0 / c_tilde) * (pc * (sb - sc)).powi(2) - c_tilde * (sc * (pc - pb)).powi(2));
            pmin = pmin.min(pc);
            pp_min = pp_min.min(pb * pc);
            pp_max = pp_max.max(pb * pc);
        }
        let kappa = (1.0 - 1.0 / c_tilde) * pmin * pmin / (pp_max * pp_max);
        let kappa_slack = c_tilde / (pp_min * pp_min);
        let bound = kappa * psi_sep - kappa_slack * slack;
        TransferReport {
            score_sep,
            bound,
            cross,
            cross_bound: weighted,
            kappa,
            kappa_slack,
            holds: score_sep >= bound && cross >= weighted,
        }
    }
}

fn domain_err<T>(t: f64) -> Result<T> {
    domain(format!("t must be nonnegative, got {t}"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferReport {
    /// `int_I |s_b - s_c|^2`
    pub score_sep: f64,
    /// `kappa int |psi_b - psi_c|^2 - kappa' int |psi_c|^2 |p_b - p_c|^2`
    pub bound: f64,
    /// `int_I |psi_b p_c - psi_c p_b|^2`
    pub cross: f64,
    pub cross_bound: f64,
    pub kappa: f64,
    pub kappa_slack: f64,
    pub holds: bool,
}

/// `int |psi_b(x, t) - psi_c(x, t)|^2` over I or the whole line.
pub fn psi_separation(fam: &FanoFamily, b: usize, c: usize, t: f64, dom: Domain) -> Result<f64> {
    let g = SeparationGrid::new(fam, t, dom)?;
    Ok(g.psi_separation(&fam.codewords[b], &fam.codewords[c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub b: usize,
    pub c: usize,
    pub t: f64,
    pub distance: usize,
    pub separation: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The separation on I against `(1/3) d eps^(2 alpha) rho^-1 ||w'||^2` for every pair.
pub fn separation_pairs(fam: &FanoFamily) -> Result<Vec<PairCheck>> {
    let g = SeparationGrid::new(fam, fam.t, Domain::Interior)?;
    let mut out = Vec::new();
    for b in 0..fam.size() {
        for c in b + 1..fam.size() {
            let d = fam.distance(b, c);
            let sep = g.psi_separation(&fam.codewords[b], &fam.codewords[c]);
            let bound = fam.separation_scale(d) / 3.0;
            out.push(PairCheck { b, c, t: fam.t, distance: d, separation: sep, bound, pass: sep >= bound });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationReport {
    pub c3: f64,
    pub c_margin: f64,
    pub m: usize,
    pub family_size: usize,
    pub pairs: Vec<PairCheck>,
    /// `(C3, margin)` settings tried before the reported one
    pub tried: Vec<(f64, f64)>,
    pub family: FanoFamily,
}

impl EscalationReport {
    pub fn pass(&self) -> bool {
        !self.pairs.is_empty() && self.pairs.iter().all(|p| p.pass)
    }

    pub fn worst_ratio(&self) -> f64 {
        self.pairs.iter().map(|p| p.separation / p.bound).fold(f64::INFINITY, f64::min)
    }
}

/// Runs the pair check at `C3`, then `2 C3` and `4 C3` until every pair passes. `m` is
/// reduced to the largest grid that fits; if no grid fits with the configured margin,
/// a margin of one bump width is used instead.
pub fn separation_with_escalation(m: usize, t: f64, alpha: f64, eps: f64, base: &FanoParams) -> Result<EscalationReport> {
    let mut tried = Vec::new();
    let mut last = None;
    for c3 in [base.c3, 2.0 * base.c3, 4.0 * base.c3] {
        let mut p = FanoParams { c3, ..*base };
        if max_grid_points(t, eps, &p) == 0 && p.c_margin > 1.0 {
            tried.push((c3, p.c_margin));
            p.c_margin = 1.0;
        }
        let fit = m.min(max_grid_points(t, eps, &p));
        if fit == 0 {
            tried.push((c3, p.c_margin));
            continue;
        }
        let fam = build_fano(fit, t, alpha, eps, &p)?;
        let pairs = separation_pairs(&fam)?;
        let rep = EscalationReport { c3, c_margin: p.c_margin, m: fit, family_size: fam.size(), pairs, tried: tried.clone(), family: fam };
        if rep.pass() {
            return Ok(rep);
        }
        tried.push((c3, p.c_margin));
        last = Some(rep);
    }
    last.ok_or_else(|| Error::Construction(format!("no feasible grid at t = {t} for any C3 tried")))
}

/// Norms of `phi_t * h^(k)` for `h = w(. / rho)`, via `int int h(a) h(b) phi_2t(a - b)`.
pub fn smoothed_norm_sq(rho: f64, t: f64, k: usize) -> f64 {
    let shape = |u: f64| if k == 0 { bump::w(u) } else { bump::w1(u) / rho };
    let width = if t > 0.0 { (rho / 32.0).min((2.0 * t).sqrt() / 4.0) } else { rho / 32.0 };
    let rule = PanelRule::new(-rho, rho, width, &[]);
    let h: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * shape(x / rho)).collect();
    if t == 0.0 {
        return rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * shape(x / rho).powi(2)).sum();
    }
    let n = h.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += h[j] * phi(rule.nodes[i] - rule.nodes[j], 2.0 * t);
        }
        s += h[i] * row;
    }
    s
}

/// `(lhs, rhs)`: central difference in t of `||phi_t * h||^2` with step t/1000 against
/// `-||phi_t * h'||^2`, for `h = w(. / rho)`.
pub fn heat_identity_check(rho: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !(rho > 0.0) {
        return domain(format!("need t > 0 and rho > 0, got t={t}, rho={rho}"));
    }
    let dt = t / 1000.0;
    let lhs = (smoothed_norm_sq(rho, t + dt, 0) - smoothed_norm_sq(rho, t - dt, 0)) / (2.0 * dt);
    let rhs = -smoothed_norm_sq(rho, t, 1);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCheck {
    /// `||(phi_t * g)'||^2` over the line
    pub smoothed: f64,
    /// `||g'||^2 - t ||g''||^2`
    pub bound: f64,
    pub holds: bool,
}

/// First-order heat-flow bound for `g = f_b - f_c`.
pub fn taylor_check(grid: &SeparationGrid, fam: &FanoFamily, b: usize, c: usize) -> TaylorCheck {
    let d = fam.distance(b, c) as f64;
    let a2 = fam.amplitude().powi(2);
    let bound = d * a2 * (norms().w1 / fam.rho - grid.t * norms().w2 / fam.rho.powi(3));
    let smoothed = grid.psi_separation(&fam.codewords[b], &fam.codewords[c]);
    TaylorCheck { smoothed, bound, holds: smoothed >= bound }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlRadius {
    pub kl: f64,
    pub chi2: f64,
    /// `2 ||w||^2 eps^(2 alpha) d_Ham(b, 0) rho`
    pub closed_form: f64,
}

/// `(1 + y) ln(1 + y) - y`, by series near 0.
fn entropy_gap(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        let mut s = 0.0;
        let mut p = y * y;
        for k in 2..10 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * p / (k * (k - 1)) as f64;
            p *= y;
        }
        s
    } else {
        (1.0 + y) * y.ln_1p() - y
    }
}

/// `KL(f_b || f_0)` and `chi^2(f_b || f_0)` by quadrature. The KL integrand has
/// `f_b - f_0` (which integrates to 0) removed, leaving a nonnegative integrand.
pub fn kl_radius(fam: &FanoFamily, b: usize) -> Result<KlRadius> {
    let f = fam.density(b)?;
    let mut extra: Vec<f64> = fam.centers.iter().flat_map(|&c| [c - fam.rho, c, c + fam.rho]).collect();
    extra.sort_by(f64::total_cmp);
    let br = breakpoints(-1.0, 1.0, fam.rho / 4.0, &extra);
    let kl = integrate(
        |x| {
            let v = f.eval(x);
            0.5 * entropy_gap(2.0 * (v - 0.5))
        },
        &br,
        1e-12,
        1e-24,
    )?
    .value;
    let chi2 = integrate(|x| 2.0 * (f.eval(x) - 0.5).powi(2), &br, 1e-12, 1e-24)?.value;
    let d = fam.codewords[b].iter().filter(|&&v| v != 0).count() as f64;
    let closed_form = 2.0 * norms().w * fam.amplitude().powi(2) * d * fam.rho;
    Ok(KlRadius { kl, chi2, closed_form })
}

/// Signed `(int mu^2 phi)(int phi) - (int mu phi)^2` over [-1, 1], in a form free of
/// the `x^2` cancellation.
pub fn two_point_g(x: f64, t: f64) -> f64 {
    let (a, b) = (-1.0 - x, 1.0 - x);
    let m0 = unit_mass(x, t);
    let (pa, pb) = (phi(a, t), phi(b, t));
    let delta = pa - pb;
    t * (m0 * m0 - m0 * (b * pb - a * pa) - t * delta * delta)
}

/// The squared determinant of the two-point construction.
pub fn two_point_gsep(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("t must be positive, got {t}"));
    }
    let r = t.sqrt();
    if x.abs() > 1.0 + r {
        return domain(format!("x = {x} outside I = [-1 - sqrt t, 1 + sqrt t]"));
    }
    Ok(two_point_g(x, t).powi(2))
}

/// `2 E[phi(x - U) phi(x - U') (U - U')^2]` for independent uniforms on [-1, 1], by
/// tensor Gauss-Legendre.
pub fn two_point_g_double(x: f64, t: f64) -> f64 {
    let width = (t.sqrt() / 4.0).min(0.125);
    let mut br: Vec<f64> = vec![x.clamp(-1.0, 1.0)];
    br.sort_by(f64::total_cmp);
    let rule = PanelRule::new(-1.0, 1.0, width, &br);
    let g: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w * phi(x - u, t)).collect();
    let n = g.len();
    let mut s = 0.0;
    for i in 0..n {
        let ui = rule.nodes[i];
        let mut row = 0.0;
        for j in 0..n {
            let du = ui - rule.nodes[j];
            row += g[j] * du * du;
        }
        s += g[i] * row;
    }
    // E over the uniform pair is a quarter of the double integral
    2.0 * s / 4.0
}

/// `(psi_1 p_0 - psi_0 p_1, eps^alpha / (2 t rho) G)` for the linear perturbation
/// `f_1 = 1/2 + (eps^alpha / rho) mu`.
pub fn two_point_identity(x: f64, t: f64, alpha: f64, eps: f64, rho: f64) -> Result<(f64, f64)> {
    let f0 = NoisyDensityOracle::new(AnalyticDensity::new(DensitySpec::uniform())?);
    let f1 = NoisyDensityOracle::new(AnalyticDensity::new(DensitySpec::linear(alpha, eps, rho))?);
    let s0 = f0.p_psi_s(x, t)?;
    let s1 = f1.p_psi_s(x, t)?;
    let lhs = s1.psi * s0.p - s0.psi * s1.p;
    let rhs = eps.powf(alpha) / (2.0 * t * rho) * two_point_g(x, t);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> FanoParams {
        FanoParams::default()
    }

    #[test]
    fn single_slot_code() {
        let f = build_fano(1, 1e-4, 2.0, 0.004, &params()).unwrap();
        assert_eq!(f.codewords, vec![vec![0], vec![1]]);
        assert_eq!(f.min_distance, 1);
    }

    #[test]
    fn code_certificate() {
        for m in [4usize, 8, 12, 16, 24] {
            let code = greedy_code(m, m.div_ceil(4), 2000, 1);
            let ln = (code.len() as f64).ln();
            assert!(ln >= m as f64 / 8.0, "m {m} size {}", code.len());
            for i in 0..code.len() {
                for j in i + 1..code.len() {
                    assert!(hamming(&code[i], &code[j]) >= m.div_ceil(4));
                }
            }
        }
    }

    #[test]
    fn family_densities_integrate_to_one() {
        let f = build_fano(12, 1e-4, 2.0, 0.004, &params()).unwrap();
        for b in 0..f.size().min(5) {
            let d = f.density(b).unwrap();
            assert!((d.total_mass().unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_geometry_is_named() {
        let e = build_fano(12, 1e-2, 2.0, 0.04, &params()).unwrap_err();
        assert!(matches!(e, Error::Construction(_)));
        assert!(build_fano(12, 1e-3, 2.0, 0.012, &params()).is_err());
    }

    #[test]
    fn separation_at_zero_noise() {
        let f = build_fano(8, 1e-4, 2.0, 0.004, &params()).unwrap();
        let g = SeparationGrid::new(&f, 0.0, Domain::Interior).unwrap();
        for (b, c) in [(0, 1), (1, 2), (2, 5)] {
            let v = g.psi_separation(&f.codewords[b], &f.codewords[c]);
            let want = f.separation_scale(f.distance(b, c));
            assert!((v - want).abs() < 1e-9 * want, "{v} vs {want}");
        }
        assert_eq!(g.psi_separation(&f.codewords[3], &f.codewords[3]), 0.0);
    }

    #[test]
    fn grid_separation_matches_adaptive_quadrature() {
        let f = build_fano(4, 1e-3, 2.0, 0.012, &params()).unwrap();
        let g = SeparationGrid::new(&f, 1e-3, Domain::Interior).unwrap();
        let (b, c) = (0, 1);
        let via_grid = g.psi_separation(&f.codewords[b], &f.codewords[c]);
        let ob = NoisyDensityOracle::new(f.density(b).unwrap());
        let oc = NoisyDensityOracle::new(f.density(c).unwrap());
        let (lo, hi) = f.interval;
        let br = breakpoints(lo, hi, 0.02, &[]);
        let direct = integrate(
            |x| (ob.p_psi_s(x, 1e-3).unwrap().psi - oc.p_psi_s(x, 1e-3).unwrap().psi).powi(2),
            &br,
            1e-10,
            0.0,
        )
        .unwrap()
        .value;
        assert!((via_grid - direct).abs() < 1e-7 * direct, "{via_grid} vs {direct}");
    }

    #[test]
    fn heat_identity() {
        let (l, r) = heat_identity_check(1.0, 0.01).unwrap();
        assert!(l <= 0.0);
        assert!((l / r - 1.0).abs() < 1e-4, "{l} {r}");
        assert!(smoothed_norm_sq(1.0, 0.01, 0) <= smoothed_norm_sq(1.0, 0.0, 0));
        assert!((smoothed_norm_sq(1.0, 0.0, 0) - norms().w).abs() < 1e-12);
    }

    #[test]
    fn kl_radius_examples() {
        let f = build_fano(12, 1e-4, 2.0, 0.004, &params()).unwrap();
        let k0 = kl_radius(&f, 0).unwrap();
        assert_eq!(k0.kl, 0.0);
        for b in 1..f.size().min(6) {
            let k = kl_radius(&f, b).unwrap();
            assert!(k.kl <= k.chi2);
            assert!((k.chi2 - k.closed_form).abs() <= 1e-8 * k.closed_form);
        }
    }

    #[test]
    fn two_point_examples() {
        for &t in &[0.05f64, 0.5, 2.0] {
            let r = t.sqrt();
            for i in 0..=20 {
                let x = -1.0 - r + (2.0 + 2.0 * r) * i as f64 / 20.0;
                let g = two_point_gsep(x, t).unwrap();
                assert!(g > 0.0);
                assert!((g - two_point_gsep(-x, t).unwrap()).abs() <= 1e-12 * g);
                let d = two_point_g_double(x, t);
                let s = two_point_g(x, t);
                assert!((d - s).abs() <= 1e-9 * s.abs(), "t {t} x {x}: {s} vs {d}");
                let (l, rr) = two_point_identity(x, t, 2.0, 0.3, 1.0).unwrap();
                assert!((l - rr).abs() <= 1e-8 * rr.abs(), "{l} {rr}");
            }
        }
        assert!(two_point_gsep(3.0, 0.05).is_err());
    }
}
