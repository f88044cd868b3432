use polaron_core::estimator::{mean_and_stderr, run_chains, stream_rng, McmcConfig};
use polaron_core::{c_gamma_d, theoretical_bound, upper_bound_mc, MemoryDensity, ModelParams, UpperBoundOptions};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn planar_constant_matches_inverse_radius_moment() {
    let mut rng = stream_rng(17, 0);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            1.0 / x.hypot(y)
        })
        .collect();
    let (m, se) = mean_and_stderr(&draws);
    let c = c_gamma_d(1.0, 2).unwrap();
    assert!((m - c).abs() <= 3.0 * se, "{m} +- {se} vs {c}");
}

#[test]
fn chain_estimates_do_not_increase_with_coupling() {
    let g = MemoryDensity::exp1();
    let cfg = McmcConfig::with_steps(300_000);
    let est: Vec<_> = [0.25, 0.5, 1.0]
        .iter()
        .map(|&a| run_chains(&ModelParams::frohlich(a, 0.0, 10.0), &g, &cfg, 3, 1).unwrap().remove(0).diffusion)
        .collect();
    for w in est.windows(2) {
        assert!(w[1].value <= w[0].value + 3.0 * w[0].stderr.hypot(w[1].stderr), "{est:?}");
    }
}

#[test]
fn dormant_fraction_horizon_dependence_is_a_boundary_term() {
    // intervals must end before T, so coverage thins near both ends: f(T) = f_inf + B / T
    let g = MemoryDensity::exp1();
    let cfg = McmcConfig::with_steps(1_000_000);
    let f: Vec<_> = [10.0, 20.0, 40.0]
        .iter()
        .map(|&t| run_chains(&ModelParams::frohlich(0.5, 0.0, t), &g, &cfg, 8, 1).unwrap().remove(0).dormant_fraction)
        .collect();
    assert!(f.iter().all(|e| e.value > 0.0 && e.value < 1.0));
    let d1 = f[0].value - f[1].value;
    let d2 = f[1].value - f[2].value;
    let s: Vec<f64> = f.iter().map(|e| e.stderr).collect();
    assert!(d1 > 3.0 * s[0].hypot(s[1]), "{f:?}");
    // d2 - d1/2 = 1.5 f(20) - f(40) - 0.5 f(10)
    let resid_se = (0.25 * s[0] * s[0] + 2.25 * s[1] * s[1] + s[2] * s[2]).sqrt();
    assert!((d2 - 0.5 * d1).abs() <= 3.0 * resid_se, "d1 = {d1}, d2 = {d2}");
}

#[test]
fn upper_bound_boundary_term_shrinks() {
    let g = MemoryDensity::exp1();
    let params = ModelParams::frohlich(1e3, 1.0, 1000.0);
    let c = 3.0;
    let opts = UpperBoundOptions::default();
    let a = upper_bound_mc(&params, &g, c, 100, 1, opts).unwrap().skeleton;
    let b = upper_bound_mc(&params.with_horizon(2000.0), &g, c, 100, 2, opts).unwrap().skeleton;
    assert!((a.value - b.value).abs() <= 2.0 / 1000.0 + 3.0 * a.stderr.hypot(b.stderr));
    let bound = theoretical_bound(&params, &g, c).unwrap();
    assert!(b.value <= bound + 3.0 * b.stderr + 2.0 / 2000.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_tends_to_mark_floor(c in 0.2f64..20.0, d in 2u32..5) {
        let g = MemoryDensity::exp1();
        let p = |a: f64| ModelParams::new(a, 1.0, d, 1.0, 1.0);
        let lo = theoretical_bound(&p(1.0), &g, c).unwrap();
        let hi = theoretical_bound(&p(1e3), &g, c).unwrap();
        let limit = theoretical_bound(&p(1e300), &g, c).unwrap();
        prop_assert!(hi < lo);
        prop_assert!((limit - 1.0 / (c * c + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn upper_bound_estimate_stays_in_unit_interval(alpha in 1.0f64..1e4, c in 0.5f64..5.0, seed in any::<u64>()) {
        let params = ModelParams::frohlich(alpha, 1.0, 200.0);
        let est = upper_bound_mc(&params, &MemoryDensity::exp1(), c, 10, seed, UpperBoundOptions::default()).unwrap();
        prop_assert!(est.skeleton.value > 0.0 && est.skeleton.value <= 1.0);
        prop_assert!(est.skeleton_dormant.value <= est.skeleton.value + 1e-12);
    }
}
