use std::sync::Arc;

use diffscore::density::{AnalyticDensity, Dataset, DensitySpec};
use diffscore::gaussian::{interval_mass, phi, regularizer, tail_ratio, unit_mass, upper_tail};
use diffscore::kernel::{build_shaped_kernel, KdeModel, KernelShape};
use diffscore::lower_bound::{
    build_fano, greedy_code, heat_identity_check, smoothed_norm_sq, taylor_check, two_point_gsep, Domain, FanoParams,
    SeparationGrid,
};
use diffscore::oracle::NoisyDensityOracle;
use diffscore::risk::trapezoid;
use diffscore::score::{
    d1_edge, very_high_parts, FittedScores, LowState, ScaledEstimate, ScoreConfig,
};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn bump() -> AnalyticDensity {
    AnalyticDensity::new(DensitySpec::single_bump(2.0, 0.1, 0.8, 0.1)).unwrap()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn interval_mass_is_additive(a in -4.0f64..4.0, d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, x in -5.0f64..5.0, t in 1e-4f64..10.0) {
        let (b, c) = (a + d1, a + d1 + d2);
        let sum = interval_mass(a, b, x, t).unwrap() + interval_mass(b, c, x, t).unwrap();
        prop_assert!((sum - interval_mass(a, c, x, t).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn unit_mass_derivative(x in -3.0f64..3.0, t in 0.01f64..10.0) {
        let h = 1e-6;
        let fd = (unit_mass(x + h, t) - unit_mass(x - h, t)) / (2.0 * h);
        let exact = phi(x + 1.0, t) - phi(x - 1.0, t);
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3), "{fd} {exact}");
    }

    #[test]
    fn tail_sandwich(lx in 0.0f64..30f64.ln()) {
        let x = lx.exp();
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let e = (-x * x / 2.0).exp();
        let q = upper_tail(x);
        prop_assert!(c / (2.0 * x) * e <= q && q <= c / x * e);
    }

    #[test]
    fn tail_ratio_bound(x in 1.0f64..20.0, lt in -14.0f64..0.0) {
        let t = lt.exp();
        prop_assert!(tail_ratio(x, t) <= 0.67);
    }

    #[test]
    fn regularizer_is_even(x in -5.0f64..5.0, t in 1e-4f64..10.0) {
        prop_assert_eq!(regularizer(x, t, 0.2).unwrap(), regularizer(-x, t, 0.2).unwrap());
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn p_positivity_floor(u in -1.0f64..1.0, lt in -9.0f64..0.0) {
        let t = lt.exp();
        let x = u * (1.0 + 4.0 * t.sqrt());
        let floor = 0.2 * (upper_tail(4.0) - upper_tail(6.0));
        for f in [AnalyticDensity::uniform(), bump()] {
            let p = NoisyDensityOracle::new(f).p_psi_s(x, t).unwrap().p;
            prop_assert!(p >= floor, "{x} {t} {p}");
        }
    }

    #[test]
    fn score_envelope(x in -4.0f64..4.0, lt in -9.0f64..2.5) {
        let t = lt.exp();
        for f in [AnalyticDensity::uniform(), bump()] {
            let sm = NoisyDensityOracle::new(f).p_psi_s(x, t).unwrap();
            let bound = (2.0 / t) * (-(2.0 * std::f64::consts::PI * t).sqrt().ln() - sm.log_p);
            prop_assert!(sm.s * sm.s <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tweedie_matches_closed_forms(x in -2.0f64..2.0, lt in -7.0f64..2.0) {
        let t = lt.exp();
        let o = NoisyDensityOracle::new(bump());
        let s = o.p_psi_s(x, t).unwrap().s;
        prop_assert!((o.tweedie_score(x, t).unwrap() - s).abs() <= 1e-7 * (1.0 + s.abs()));
    }

    #[test]
    fn quantile_inverts_cdf(q in 0.0f64..1.0) {
        let f = bump();
        let x = f.quantile(q).unwrap();
        prop_assert!((f.cdf(x) - q).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible_and_supported(seed in any::<u64>()) {
        let f = bump();
        let a = f.sample(200, seed);
        prop_assert_eq!(&a, &f.sample(200, seed));
        prop_assert!(a.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn kernel_reads_only_its_window(x in -1.0f64..1.0, seed in any::<u64>()) {
        let f = bump();
        let data = f.sample(300, seed);
        let h = 0.3;
        let kde = KdeModel::new(&data, h, 2.0).unwrap();
        let inside = |v: f64| if x >= 0.0 { v >= x - h && v <= x } else { v >= x && v <= x + h };
        let away = if x >= 0.0 { x - h - 0.01 } else { x + h + 0.01 };
        let moved: Vec<f64> = data.values.iter().map(|&v| if inside(v) { v } else { away }).collect();
        let other = KdeModel::new(&Dataset::new(moved, seed), h, 2.0).unwrap();
        for k in 0..2 {
            prop_assert_eq!(kde.eval(x, k).unwrap(), other.eval(x, k).unwrap());
        }
    }

    #[test]
    fn fitted_scores_are_finite(x in -50.0f64..50.0, lt in -13.0f64..4.0, seed in any::<u64>()) {
        let t = lt.exp();
        let data = AnalyticDensity::uniform().sample(64, seed);
        for alpha in [0.5, 2.0] {
            let s = FittedScores::fit(&data, alpha, &ScoreConfig::default()).unwrap().slice(t).eval(x);
            prop_assert!(s.is_finite());
        }
    }

    #[test]
    fn estimator_envelope(x in -3.0f64..3.0, lt in -11.0f64..4.0, seed in any::<u64>()) {
        let t = lt.exp();
        let data = bump().sample(256, seed);
        let s = FittedScores::fit(&data, 2.0, &ScoreConfig::default()).unwrap().slice(t).eval(x);
        let eps = regularizer(x, t, 0.2).unwrap();
        let log_term = (-(2.0 * std::f64::consts::PI * t).sqrt().ln() - eps.ln()).max(0.0);
        let bound = ((2.0 / t) * log_term).sqrt() + x.abs() / t + 1.0 / t;
        prop_assert!(s.abs() <= bound, "{x} {t} {s} {bound}");
    }

    #[test]
    fn very_high_identity(x in -1.0f64..1.0, t in 1.0f64..50.0, seed in any::<u64>()) {
        let data = bump().sample(100, seed).values;
        let (p, psi) = very_high_parts(&data, x, t, 0.2);
        let direct: f64 = data.iter().map(|&mu| mu * phi(x - mu, t)).sum::<f64>() / (data.len() as f64 * t);
        prop_assert!((psi + x / t * p - direct).abs() <= 1e-13 * direct.abs().max(1e-3));
    }

    #[test]
    fn ratio_homogeneous_outside_d1(lambda in 0.1f64..10.0, u in 0.0f64..1.0, seed in any::<u64>()) {
        let data = AnalyticDensity::uniform().sample(4096, seed);
        let kde = KdeModel::fit(&data, 2.0, 1.0).unwrap();
        let base = LowState::with_omega(Arc::new(kde.clone()), true);
        let scaled = LowState::with_omega(Arc::new(ScaledEstimate { lambda, inner: kde }), true);
        let t = 1e-4;
        let cfg = ScoreConfig::default();
        let x = d1_edge(t, 4.0) + u * 0.1;
        let (a, b) = (base.slice(t, &cfg).eval(x), scaled.slice(t, &cfg).eval(x));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {b}");
    }

    #[test]
    fn kernel_moments_exact(order in 1usize..=8) {
        for shape in [KernelShape::Minimal, KernelShape::Vanishing] {
            let k = build_shaped_kernel(order, shape).unwrap();
            prop_assert_eq!(k.moment_exact(0), (1, 1));
            for i in 1..=order {
                prop_assert_eq!(k.moment_exact(i).0, 0);
            }
        }
    }

    #[test]
    fn greedy_code_certificate(m in 1usize..=24, seed in any::<u64>()) {
        let code = greedy_code(m, m.div_ceil(4), 300, seed);
        for i in 0..code.len() {
            for j in i + 1..code.len() {
                let d = code[i].iter().zip(&code[j]).filter(|(a, b)| a != b).count();
                prop_assert!(d >= m.div_ceil(4));
            }
        }
        prop_assert!((code.len() as f64).ln() >= m as f64 / 8.0);
    }

    #[test]
    fn two_point_gsep_positive_and_even(u in -1.0f64..1.0, lt in -4.0f64..3.0) {
        let t = lt.exp();
        let x = u * (1.0 + t.sqrt());
        let g = two_point_gsep(x, t).unwrap();
        prop_assert!(g > 0.0);
        prop_assert!((g - two_point_gsep(-x, t).unwrap()).abs() <= 1e-12 * g);
    }

    #[test]
    fn heat_flow_contracts(rho in 0.1f64..1.0, lt in -9.0f64..-2.0) {
        let t = lt.exp();
        let (l, r) = heat_identity_check(rho, t).unwrap();
        prop_assert!(l <= 0.0 && r <= 0.0);
        prop_assert!(smoothed_norm_sq(rho, t, 0) <= smoothed_norm_sq(rho, 0.0, 0) * (1.0 + 1e-12));
    }

    #[test]
    fn integrated_risk_monotone_in_upper_limit(ys in prop::collection::vec(0.0f64..1.0, 3..12)) {
        let ts: Vec<f64> = (0..ys.len()).map(|i| 1e-3 * 2f64.powi(i as i32)).collect();
        for k in 2..ys.len() {
            prop_assert!(trapezoid(&ts[..k], &ys[..k]) <= trapezoid(&ts[..k + 1], &ys[..k + 1]));
        }
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn fano_pairs_satisfy_taylor_and_transfer(seed in any::<u64>()) {
        let p = FanoParams { c3: 16.0, seed, ..FanoParams::default() };
        let fam = build_fano(4, 1e-4, 2.0, 0.004, &p).unwrap();
        let full = SeparationGrid::new(&fam, 1e-4, Domain::FullLine).unwrap();
        let inner = SeparationGrid::new(&fam, 1e-4, Domain::Interior).unwrap();
        let k = fam.size();
        let (b, c) = ((seed % k as u64) as usize, ((seed / 7) % k as u64) as usize);
        prop_assume!(b != c);
        prop_assert!(taylor_check(&full, &fam, b, c).holds);
        prop_assert!(inner.transfer_check(&fam.codewords[b], &fam.codewords[c], 10.0).holds);
        for w in 0..k {
            prop_assert!((fam.density(w).unwrap().total_mass().unwrap() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn smoothed_density_integrates_to_one() {
    for f in [AnalyticDensity::uniform(), bump()] {
        let o = NoisyDensityOracle::new(f);
        for t in [0.01f64, 0.1, 1.0, 10.0] {
            let r = 1.0 + 40.0 * t.sqrt();
            let br = diffscore::quadrature::breakpoints(-r, r, t.sqrt().min(0.1), &[-1.0, 1.0]);
            let v = diffscore::quadrature::integrate(|x| o.p_psi_s(x, t).unwrap().p, &br, 1e-12, 0.0).unwrap().value;
            assert!((v - 1.0).abs() < 1e-8, "t {t}: {v}");
        }
    }
}

#[test]
fn holder_membership_of_test_densities() {
    for spec in [
        DensitySpec::uniform(),
        DensitySpec::single_bump(2.0, 0.1, 0.8, 0.0),
        DensitySpec::multiscale(0.5, 0.0064, 0.25, 12, 7),
    ] {
        let f = AnalyticDensity::new(spec).unwrap();
        assert!(f.check_membership(diffscore::density::HOLDER_L).unwrap().holds);
    }
}
