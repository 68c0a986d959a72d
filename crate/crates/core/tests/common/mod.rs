#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scoretest::spatial::SpatialWeights;

/// Random `(y, X, W)` with a ring backbone plus random extra links, row-standardized.
pub fn spatial_inputs(n: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>, SpatialWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        w[(i, (i + 1) % n)] = 1.0;
        w[(i, (i + n - 1) % n)] = 1.0;
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.1 {
                w[(i, j)] = rng.random_range(0.5..2.0);
            }
        }
    }
    let w = SpatialWeights::new(w).unwrap().row_standardize();
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) * 2.0 });
    let beta = DVector::from_vec(vec![1.0, 0.5, -0.8]);
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Some spatial lag in y so the scores are not all near zero.
    let y0 = &x * beta + eps;
    let y = &y0 + w.matrix() * &y0 * rng.random_range(-0.4..0.4);
    (y, x, w)
}
