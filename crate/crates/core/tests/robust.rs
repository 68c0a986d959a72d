use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use scoretest::estimator::{fit_restricted, initial_point, FitOptions, Restriction};
use scoretest::likelihood::{Dataset, InfoKind, ParamVector};
use scoretest::models::NormalModel;
use scoretest::robust::{
    compute_jk, im_equality_check, rs_psi_stat, rs_star_d, rs_star_d_blocks, rs_star_d_general, rs_star_dp_stat,
    rs_star_p_stat, sandwich_b, Partition,
};
use scoretest::trinity::rao_score_test;

/// Random SPD matrix `A A' + p I / 4`.
fn spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(p, p) * (p as f64 / 4.0)
}

fn fixture(m: usize, r: usize, q: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>, Partition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = m + r + q;
    let j = spd(p, &mut rng);
    let k = spd(p, &mut rng);
    let s = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
    // Interleave the blocks so the code cannot rely on contiguous layouts.
    let mut order: Vec<usize> = (0..p).collect();
    order.rotate_left(seed as usize % p);
    let part = Partition { gamma: order[..m].to_vec(), psi: order[m..m + r].to_vec(), phi: order[m + r..].to_vec() };
    (s, j, k, part)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn joint_robust_statistic_reductions(m in 0usize..4, r in 1usize..4, q in 1usize..4, seed in any::<u64>()) {
        let (s, j, k, part) = fixture(m, r, q, seed);
        let dp_equal = rs_star_dp_stat(&s, &j, &j, &part).unwrap();
        prop_assert!(close(dp_equal, rs_star_p_stat(&s, &j, &part).unwrap()));
        let nophi = part.without_phi();
        let dp_nophi = rs_star_dp_stat(&s, &j, &k, &nophi).unwrap();
        prop_assert!(close(dp_nophi, rs_star_d_blocks(&s, &j, &k, &nophi).unwrap()));
        let both = rs_star_dp_stat(&s, &j, &j, &nophi).unwrap();
        prop_assert!(close(both, rs_psi_stat(&s, &j, &nophi).unwrap()));
    }

    #[test]
    fn sandwich_is_symmetric(p in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (j, k) = (spd(p, &mut rng), spd(p, &mut rng));
        let b = sandwich_b(&j, &k).unwrap();
        prop_assert!((&b - b.transpose()).amax() <= 1e-12 * b.amax());
    }

    #[test]
    fn subset_and_selector_forms_agree(m in 0usize..4, r in 1usize..4, seed in any::<u64>()) {
        let (s, j, k, part) = fixture(m, r, 1, seed);
        let part = Partition { phi: vec![], gamma: [part.gamma.clone(), part.phi.clone()].concat(), psi: part.psi };
        let p = s.len();
        let mut h = DMatrix::zeros(part.psi.len(), p);
        for (row, &c) in part.psi.iter().enumerate() {
            h[(row, c)] = 1.0;
        }
        // At a restricted estimate the nuisance score is zero; zero it so the forms are comparable.
        let mut s0 = s.clone();
        for &g in &part.gamma {
            s0[g] = 0.0;
        }
        let a0 = rs_star_d_blocks(&s0, &j, &k, &part).unwrap();
        let b0 = rs_star_d_general(&s0, &j, &k, &h).unwrap();
        prop_assert!(close(a0, b0));
    }
}

fn moments(y: &[f64]) -> (f64, f64, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let c = |k: i32| y.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    (mean, c(2), c(3), c(4))
}

#[test]
fn outer_product_and_hessian_match_moment_expressions() {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let y: Vec<f64> = (0..n).map(|_| 1.5 + 2f64.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    let (mean, s2, mu3, mu4) = moments(&y);
    let d = Dataset::from_y(y).unwrap();
    let (j, k) = compute_jk(&NormalModel::new(), &d, &ParamVector::new(vec![mean, s2])).unwrap();
    let nf = n as f64;
    let j_expect = [
        nf / s2,
        nf * mu3 / (2.0 * s2.powi(3)),
        nf * (mu4 / (4.0 * s2.powi(4)) - 1.0 / (4.0 * s2 * s2)),
    ];
    let k_expect = [nf / s2, 0.0, nf / (2.0 * s2 * s2)];
    let scale = (j[(0, 0)] * j[(1, 1)]).sqrt();
    for (got, want) in [(j[(0, 0)], j_expect[0]), (j[(1, 1)], j_expect[2]), (k[(0, 0)], k_expect[0]), (k[(1, 1)], k_expect[2])] {
        assert!((got - want).abs() < 0.05 * want.abs(), "{got} vs {want}");
    }
    assert!((j[(0, 1)] - j_expect[1]).abs() < 0.05 * scale);
    assert!((k[(0, 1)] - k_expect[1]).abs() < 0.05 * scale);
    // Normal data: information equality holds approximately.
    assert!(im_equality_check(&j, &k).unwrap().relative < 0.1);
    // Population moments for the same draw: mu3 = 0, mu4 = 3 sigma^4 with sigma^2 = 2.
    let pop = nf * (3.0 * 4.0 / (4.0 * 16.0) - 1.0 / 16.0);
    assert!((j[(1, 1)] - pop).abs() < 0.1 * pop);

    let t = StudentT::new(5.0).unwrap();
    let y: Vec<f64> = (0..n).map(|_| 1.5 + t.sample(&mut rng)).collect();
    let (mean, s2, _, _) = moments(&y);
    let d = Dataset::from_y(y).unwrap();
    let (j, k) = compute_jk(&NormalModel::new(), &d, &ParamVector::new(vec![mean, s2])).unwrap();
    assert!(im_equality_check(&j, &k).unwrap().block(&[1], &[1]) > 0.2);
}

#[test]
fn robust_variance_test_matches_classical_under_normality_and_differs_under_t() {
    let test = |y: Vec<f64>| {
        let d = Dataset::from_y(y).unwrap();
        let m = NormalModel::new();
        let r = Restriction::subset(vec![1], vec![1.0]).unwrap();
        let fit = fit_restricted(&m, &d, &r, &initial_point(&m, &d).unwrap(), FitOptions::default()).unwrap();
        let rs = rao_score_test(&m, &d, &r, &fit, InfoKind::Observed).unwrap().statistic;
        let robust = rs_star_d(&m, &d, &r, &fit).unwrap().statistic;
        (rs, robust)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (rs, robust) = test((0..5000).map(|_| 1.04 * rng.sample::<f64, _>(StandardNormal)).collect());
    assert!((rs - robust).abs() < 0.25 * rs.max(1.0), "{rs} {robust}");
    let t = StudentT::new(5.0).unwrap();
    let scale = (3.0f64 / 5.0).sqrt();
    let (rs, robust) = test((0..5000).map(|_| 1.1 * scale * t.sample(&mut rng)).collect());
    // Heavy tails inflate the classical statistic relative to the sandwich form.
    assert!(robust < 0.6 * rs, "{rs} {robust}");
}
