use proptest::prelude::*;
use scoretest::dist::binomial_band;
use scoretest::likelihood::{score, Dataset, ParamVector};
use scoretest::models::{BernoulliModel, CauchyModel, NormalModel, ScalarModel};
use scoretest::sequential::{
    calibrate_boundary, compare_fixed_vs_sequential, run_sequential, score_path, simulate_plan, CalibratedBoundary,
    Decision, SequentialDesign,
};
use scoretest::trinity::Direction;

fn normal_design() -> SequentialDesign {
    SequentialDesign::new(0.0, 30, 0.05, Direction::Greater).unwrap()
}

fn check_path<M: ScalarModel>(model: &M, theta0: f64, y: &[f64]) -> bool {
    let path = score_path(model, theta0, y);
    (1..=y.len()).all(|n| {
        let d = Dataset::from_y(y[..n].to_vec()).unwrap();
        let fresh = score(model, &d, &ParamVector::new(vec![theta0])).unwrap()[0];
        (fresh - path[n - 1]).abs() <= 1e-12 * fresh.abs().max(1.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_path_matches_recomputation(y in proptest::collection::vec(-5.0f64..5.0, 1..60), theta0 in -1.0f64..1.0) {
        prop_assert!(check_path(&NormalModel::mean_only(1.5).unwrap(), theta0, &y));
        prop_assert!(check_path(&CauchyModel::new(), theta0, &y));
        let bits: Vec<f64> = y.iter().map(|v| f64::from(*v > 0.0)).collect();
        prop_assert!(check_path(&BernoulliModel::new(), 0.3 + 0.2 * theta0, &bits));
    }

    #[test]
    fn stopping_time_is_first_crossing(y in proptest::collection::vec(-3.0f64..3.0, 20), level in -2.0f64..8.0) {
        let m = NormalModel::mean_only(1.0).unwrap();
        let plan = SequentialDesign::new(0.0, 20, 0.05, Direction::Greater).unwrap().with_boundary(CalibratedBoundary::fixed(level));
        let out = run_sequential(&m, y.clone(), &plan, 0.5).unwrap();
        prop_assert!(out.stopping_time >= 1 && out.stopping_time <= 20);
        let path = score_path(&m, 0.0, &y);
        prop_assert_eq!(&out.trajectory[..], &path[..out.stopping_time]);
        let tol = 1e-9 * level.abs().max(1.0);
        let before = &path[..out.stopping_time - 1];
        prop_assert!(before.iter().all(|&s| s <= level + tol));
        if out.decision == Decision::Reject {
            prop_assert!(path[out.stopping_time - 1] > level + tol);
        } else {
            prop_assert!(path.iter().all(|&s| s <= level + tol));
        }
    }
}

#[test]
fn calibrated_normal_boundary_has_nominal_size() {
    let m = NormalModel::mean_only(1.0).unwrap();
    let design = normal_design();
    let cal = calibrate_boundary(&m, &design, 100_000, 1, None).unwrap();
    let plan = design.with_boundary(cal.boundary);
    let sim = simulate_plan(&m, &plan, 0.0, 10_000, 991, None).unwrap();
    let (lo, hi) = binomial_band(10_000, 0.05, 0.99);
    assert!(sim.rejection_rate >= lo && sim.rejection_rate <= hi, "{} outside [{lo}, {hi}]", sim.rejection_rate);
}

#[test]
fn calibration_is_stable_and_monotone() {
    let m = NormalModel::mean_only(1.0).unwrap();
    let design = normal_design();
    let small = calibrate_boundary(&m, &design, 20_000, 3, None).unwrap();
    let large = calibrate_boundary(&m, &design, 40_000, 4, None).unwrap();
    let se = small.mc_se.max(large.mc_se);
    assert!((small.boundary.level - large.boundary.level).abs() < 2.0 * se * 2f64.sqrt(), "{small:?} {large:?}");
    let mut last = f64::INFINITY;
    for alpha in [0.01, 0.05, 0.1, 0.2] {
        let d = SequentialDesign::new(0.0, 30, alpha, Direction::Greater).unwrap();
        let b = calibrate_boundary(&m, &d, 5_000, 5, None).unwrap().boundary.level;
        assert!(b <= last);
        last = b;
    }
}

#[test]
fn binomial_calibration_uses_a_randomized_atom() {
    let m = BernoulliModel::new();
    let design = SequentialDesign::new(1.0 / 3.0, 50, 0.05, Direction::Greater).unwrap();
    let cal = calibrate_boundary(&m, &design, 50_000, 7, None).unwrap();
    // Cumulative scores live on the lattice 4.5 k - 1.5 n.
    let lattice = cal.boundary.level / 1.5;
    assert!((lattice - lattice.round()).abs() < 1e-9);
    assert!(cal.boundary.tie_prob > 0.0 && cal.boundary.tie_prob < 1.0);
    let plan = design.with_boundary(cal.boundary);
    let sim = simulate_plan(&m, &plan, 1.0 / 3.0, 10_000, 8, None).unwrap();
    let (lo, hi) = binomial_band(10_000, 0.05, 0.99);
    assert!(sim.rejection_rate >= lo && sim.rejection_rate <= hi, "{}", sim.rejection_rate);
}

#[test]
fn sequential_stops_early_under_shift_and_power_grows() {
    let m = NormalModel::mean_only(1.0).unwrap();
    let design = normal_design();
    let cal = calibrate_boundary(&m, &design, 20_000, 11, None).unwrap();
    let plan = design.with_boundary(cal.boundary);
    let rows = compare_fixed_vs_sequential(&m, &[0.0, 0.2, 0.5, 1.0], &plan, 4_000, 12, None).unwrap();
    assert!((rows[0].rejection_rate - 0.05).abs() < 0.02);
    for w in rows.windows(2) {
        assert!(w[1].rejection_rate >= w[0].rejection_rate);
    }
    let shifted = rows[3];
    assert!(shifted.expected_stopping_time < 30.0 / 2.0, "{shifted:?}");
    assert!(shifted.rejection_rate > 0.95 && shifted.fixed_power > 0.95);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let m = BernoulliModel::new();
    let design = SequentialDesign::new(1.0 / 3.0, 50, 0.05, Direction::Greater).unwrap();
    let a = calibrate_boundary(&m, &design, 5_000, 21, Some(1)).unwrap();
    let b = calibrate_boundary(&m, &design, 5_000, 21, Some(8)).unwrap();
    assert_eq!(a, b);
    let plan = design.with_boundary(a.boundary);
    let s1 = simulate_plan(&m, &plan, 0.5, 2_000, 22, Some(1)).unwrap();
    let s4 = simulate_plan(&m, &plan, 0.5, 2_000, 22, Some(4)).unwrap();
    assert_eq!(s1, s4);
}
