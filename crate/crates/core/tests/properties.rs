use polyergo::analysis::{
    check_hitting_bound, fit_power_law, tv_between_binned, tv_distance, BinPolicy,
};
use polyergo::quadrature::{vq_levels, InvariantDensity, QuadratureConfig};
use polyergo::simulate::{mc_hitting_moments, path_rng, EmpiricalCdf, MomentEstimate, SimConfig};
use polyergo::PotentialSpec;
use proptest::prelude::*;
use rand::Rng;

// survival of (2p-1) K^{2p-1} y^{-2p} is (y/K)^{-(2p-1)}
fn invariant_draws(p: f64, k: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = path_rng(seed, 0);
    (0..n)
        .map(|_| k * (1.0 - rng.gen::<f64>()).powf(-1.0 / (2.0 * p - 1.0)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn first_level_matches_closed_form(p in 0.8f64..4.0, k in 0.5f64..3.0) {
        let spec = PotentialSpec::power_tail(p, 1, k).unwrap();
        let grid = [k, 1.5 * k, 4.0 * k, 30.0 * k];
        let t = vq_levels(&spec, 1, &grid, &QuadratureConfig::default()).unwrap();
        for (i, &xi) in grid.iter().enumerate() {
            let exact = (xi * xi - k * k) / (2.0 * p - 1.0);
            prop_assert!((t[0].values[i] - exact).abs() <= 1e-7 * exact.max(1.0),
                "p {} K {} xi {}: {} vs {}", p, k, xi, t[0].values[i], exact);
        }
    }

    #[test]
    fn normalizer_matches_closed_form(p in 0.8f64..4.0, k in 0.5f64..3.0) {
        let spec = PotentialSpec::power_tail(p, 1, k).unwrap();
        let dens = InvariantDensity::new(&spec, &QuadratureConfig::default()).unwrap();
        let e = 2.0 * p - 1.0;
        let exact = e * k.powf(e);
        prop_assert!((dens.normalizer() / exact - 1.0).abs() < 1e-8);
        prop_assert!((dens.total_mass() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn power_law_fit_is_exact(s in -3.0f64..3.0, c in 1e-3f64..1e3) {
        let pts: Vec<(f64, f64)> = [1.0, 3.0, 10.0, 40.0, 200.0].iter().map(|&x: &f64| (x, c * x.powf(s))).collect();
        let f = fit_power_law(&pts).unwrap();
        prop_assert!((f.exponent - s).abs() < 1e-12);
        prop_assert!(f.residual_max < 1e-12);
    }

    #[test]
    fn hitting_bound_scales(lambda in 1e-3f64..1e3) {
        let make = |scale: f64| -> Vec<(f64, MomentEstimate)> {
            [2.0, 5.0, 10.0, 20.0, 50.0].iter().map(|&y: &f64| {
                let mut e = MomentEstimate::exact(1.0, scale * (y * y - 1.0) / 3.0, 1000);
                e.std_error = scale * 0.01 * y;
                (y, e)
            }).collect()
        };
        let a = check_hitting_bound(&make(1.0), 1, 2.0, 2.5, 1.0).unwrap();
        let b = check_hitting_bound(&make(lambda), 1, 2.0, 2.5, lambda).unwrap();
        prop_assert!((b.fitted_constant / (lambda * a.fitted_constant) - 1.0).abs() < 1e-12);
        prop_assert_eq!(a.holds, b.holds);
    }

    #[test]
    fn tv_is_bounded_and_symmetric(shift in 0.0f64..5.0, seed in 0u64..1000) {
        let spec = PotentialSpec::power_tail(2.0, 1, 1.0).unwrap();
        let dens = InvariantDensity::new(&spec, &QuadratureConfig::default()).unwrap();
        let a = EmpiricalCdf::new(invariant_draws(2.0, 1.0, 1500, seed)).unwrap();
        let b = EmpiricalCdf::new(invariant_draws(2.0, 1.0, 1500, seed + 1).into_iter().map(|y| y + shift).collect()).unwrap();
        let ab = tv_between_binned(&a, &b, &dens, BinPolicy::EqualMass(16)).unwrap().value;
        let ba = tv_between_binned(&b, &a, &dens, BinPolicy::EqualMass(16)).unwrap().value;
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        let t = tv_distance(&b, &dens, BinPolicy::EqualMass(16)).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&t));
    }
}

#[test]
fn bin_refinement_does_not_lose_distance() {
    let spec = PotentialSpec::power_tail(2.0, 1, 1.0).unwrap();
    let dens = InvariantDensity::new(&spec, &QuadratureConfig::default()).unwrap();
    let shifted: Vec<f64> = invariant_draws(2.0, 1.0, 20_000, 9).into_iter().map(|y| y + 0.3).collect();
    let e = EmpiricalCdf::new(shifted).unwrap();
    let coarse = tv_distance(&e, &dens, BinPolicy::EqualMass(16)).unwrap();
    let fine = tv_distance(&e, &dens, BinPolicy::EqualMass(64)).unwrap();
    assert!(fine.value >= coarse.value - fine.floor, "{fine:?} vs {coarse:?}");
}

#[test]
fn scaled_invariant_sample_sits_at_floor() {
    let spec = PotentialSpec::power_tail(1.5, 1, 2.0).unwrap();
    let dens = InvariantDensity::new(&spec, &QuadratureConfig::default()).unwrap();
    let e = EmpiricalCdf::new(invariant_draws(1.5, 2.0, 50_000, 4)).unwrap();
    let tv = tv_distance(&e, &dens, BinPolicy::default()).unwrap();
    assert!(tv.value <= tv.floor, "{tv:?}");
}

#[test]
fn monte_carlo_mean_hitting_time_agrees_with_quadrature() {
    // v^1(2) = (4 - 1)/3 for p = 2, K = 1
    let spec = PotentialSpec::power_tail(2.0, 1, 1.0).unwrap();
    let cfg = SimConfig::new(1e-3, 500.0, 10_000, 77);
    let e = &mc_hitting_moments(&spec, 2.0, 1, &cfg).unwrap()[0];
    let oracle = vq_levels(&spec, 1, &[2.0], &QuadratureConfig::default()).unwrap()[0].values[0];
    assert!((oracle - 1.0).abs() < 1e-9);
    assert!((e.value - oracle).abs() <= 3.0 * e.std_error + 5.0 * cfg.dt.sqrt(), "{e:?}");
}

#[test]
fn hitting_moments_do_not_depend_on_thread_count() {
    let spec = PotentialSpec::power_tail(2.0, 1, 1.0).unwrap();
    let cfg = SimConfig::new(1e-2, 100.0, 300, 5);
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let a = pool(1).install(|| mc_hitting_moments(&spec, 3.0, 2, &cfg)).unwrap();
    let b = pool(4).install(|| mc_hitting_moments(&spec, 3.0, 2, &cfg)).unwrap();
    assert_eq!(a, b);
}
