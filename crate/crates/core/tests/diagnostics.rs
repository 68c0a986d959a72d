use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use scoretest::likelihood::{Dataset, ParamVector};
use scoretest::models::{
    breusch_pagan, jarque_bera, koenker, ols, robust_skewness_from_moments, robust_skewness_test, skewness_variance,
    HeteroskedasticityOptions, NormalityMoments, RegressionModel,
};
use scoretest::trinity::{moment_test, MomentVariance};

fn draws(n: usize, seed: u64, heavy: bool) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = StudentT::new(5.0).unwrap();
    (0..n).map(|_| if heavy { t.sample(&mut rng) } else { rng.sample(StandardNormal) }).collect()
}

#[test]
fn moment_engine_reproduces_jarque_bera() {
    for (seed, heavy) in [(1, false), (2, true), (3, true)] {
        let n = 150;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..3.0)).collect();
        let e = draws(n, seed, heavy);
        let y: Vec<f64> = (0..n).map(|i| 2.0 - 0.7 * x1[i] + e[i]).collect();
        let data = Dataset::new(vec![("y", y.clone()), ("x1", x1.clone())]).unwrap();
        let model = RegressionModel::new(["x1"], true);
        let fit = model.regression_data(&data).unwrap().fit().unwrap();
        let mut theta: Vec<f64> = fit.beta.iter().copied().collect();
        theta.push(fit.sigma2);
        let mt = moment_test(
            &model,
            &data,
            &NormalityMoments::new(model.clone()),
            &ParamVector::new(theta),
            &[0, 1, 2],
            MomentVariance::ModelBased,
        )
        .unwrap();
        let jb = jarque_bera(fit.residuals.as_slice()).unwrap();
        assert!((mt.statistic - jb.statistic).abs() < 1e-8 * jb.statistic.max(1.0), "{} vs {}", mt.statistic, jb.statistic);
    }
}

#[test]
fn skewness_variance_anchor() {
    assert_eq!(skewness_variance(1.0, 3.0, 15.0), 6.0);
    let (m2, m3) = (1.0, 0.21);
    let t = robust_skewness_from_moments(120, m2, m3, 3.0, 15.0).unwrap();
    assert_eq!(t.robust.statistic, t.standard.statistic);
}

#[test]
fn robust_skewness_differs_under_heavy_tails() {
    let t = robust_skewness_test(&draws(2000, 5, true)).unwrap();
    assert!(t.robust.statistic < t.standard.statistic);
}

fn regression_setup(n: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(0.0..4.0) });
    let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { x[(i, 1)] } else { rng.random_range(-1.0..1.0) });
    let y = DVector::from_fn(n, |i, _| 1.0 + 0.5 * x[(i, 1)] + (0.5 + 0.3 * x[(i, 1)]) * rng.sample::<f64, _>(StandardNormal));
    (y, x, z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jarque_bera_location_scale_invariant(seed in any::<u64>(), a in -50.0f64..50.0, b in 0.01f64..100.0) {
        let e = draws(60, seed, true);
        let moved: Vec<f64> = e.iter().map(|v| a + b * v).collect();
        let j0 = jarque_bera(&e).unwrap().statistic;
        let j1 = jarque_bera(&moved).unwrap().statistic;
        prop_assert!((j0 - j1).abs() < 1e-8 * j0.max(1.0));
    }

    #[test]
    fn variance_tests_invariant_to_reparameterized_z(seed in any::<u64>(), a in proptest::collection::vec(-2.0f64..2.0, 4)) {
        let (y, x, z) = regression_setup(80, seed);
        let m = DMatrix::from_row_slice(2, 2, &a);
        prop_assume!(m.determinant().abs() > 0.1);
        let zr = &z * m;
        let opts = HeteroskedasticityOptions::default();
        let bp0 = breusch_pagan(&y, &x, &z, opts).unwrap().statistic;
        let bp1 = breusch_pagan(&y, &x, &zr, opts).unwrap().statistic;
        prop_assert!((bp0 - bp1).abs() < 1e-8 * bp0.max(1.0));
        let k0 = koenker(&y, &x, &z, opts).unwrap().statistic;
        let k1 = koenker(&y, &x, &zr, opts).unwrap().statistic;
        prop_assert!((k0 - k1).abs() < 1e-8 * k0.max(1.0));
    }

    #[test]
    fn ols_residuals_orthogonal(seed in any::<u64>()) {
        let (y, x, _) = regression_setup(40, seed);
        let fit = ols(&y, &x).unwrap();
        prop_assert!((x.transpose() * &fit.residuals).amax() < 1e-9 * y.amax().max(1.0) * 40.0);
    }
}
