mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use scoretest::likelihood::{Block, Dataset, InfoKind};
use scoretest::robust::{rs_psi, rs_star_p};
use scoretest::spatial::{SarFixture, SarModel};

#[test]
fn generic_engine_reproduces_closed_forms() {
    for seed in 0..5 {
        let (y, x, w) = common::spatial_inputs(25, seed);
        let f = SarFixture::new(&y, &x, &w).unwrap();
        let model = SarModel::new(x.clone(), &w).unwrap();
        let data = Dataset::from_y(y.iter().copied().collect()).unwrap();
        let theta = f.null_parameters();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * b.abs().max(1.0);

        let g = rs_psi(&model, &data, &theta, InfoKind::Expected).unwrap().statistic;
        assert!(close(g, f.rs_psi().unwrap().statistic), "seed {seed}: {g}");
        let g = rs_star_p(&model, &data, &theta, InfoKind::Expected).unwrap().statistic;
        assert!(close(g, f.rs_star_psi().unwrap().statistic), "seed {seed}: {g}");

        let mut labels = vec![Block::Gamma; x.ncols() + 1];
        labels.extend([Block::Phi, Block::Psi]);
        let swapped = theta.relabel(labels).unwrap();
        let g = rs_psi(&model, &data, &swapped, InfoKind::Expected).unwrap().statistic;
        assert!(close(g, f.rs_phi().unwrap().statistic), "seed {seed}: {g}");
        let g = rs_star_p(&model, &data, &swapped, InfoKind::Expected).unwrap().statistic;
        assert!(close(g, f.rs_star_phi().unwrap().statistic), "seed {seed}: {g}");
    }
}

#[test]
fn residuals_are_annihilated_by_projector() {
    let (y, x, w) = common::spatial_inputs(30, 7);
    let f = SarFixture::new(&y, &x, &w).unwrap();
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let m = DMatrix::identity(30, 30) - &x * xtx_inv * x.transpose();
    assert!((&m * &f.fit.residuals - &f.fit.residuals).amax() < 1e-10);
    assert!(f.t > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn double_decomposition(n in 10usize..=50, seed in any::<u64>()) {
        let (y, x, w) = common::spatial_inputs(n, seed);
        let f = SarFixture::new(&y, &x, &w).unwrap();
        prop_assert!(f.decomposition_residual().unwrap() < 1e-10);
    }

    #[test]
    fn relabeling_invariance(n in 10usize..=40, seed in any::<u64>(), shift in 1usize..9) {
        let (y, x, w) = common::spatial_inputs(n, seed);
        let order: Vec<usize> = (0..n).map(|i| (i * (2 * shift + 1) + shift) % n).collect();
        let mut seen = order.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assume!(seen.len() == n);
        let yp = y.select_rows(order.iter());
        let xp = x.select_rows(order.iter());
        let wp = w.permute(&order).unwrap();
        let a = SarFixture::new(&y, &x, &w).unwrap().all().unwrap();
        let b = SarFixture::new(&yp, &xp, &wp).unwrap().all().unwrap();
        for (r, s) in a.iter().zip(&b) {
            prop_assert!((r.statistic - s.statistic).abs() < 1e-10 * r.statistic.abs().max(1.0));
        }
    }
}
