use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{column_y, ScalarModel};
use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LikelihoodModel};

/// Cauchy location model with unit scale; the parameter is the median.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CauchyModel;

impl CauchyModel {
    pub fn new() -> Self {
        CauchyModel
    }
}

impl LikelihoodModel for CauchyModel {
    fn name(&self) -> String {
        "cauchy".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["median".into()]
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        data.column("y").map(|_| ())
    }

    fn check_domain(&self, theta: &DVector<f64>) -> Result<()> {
        if theta[0].is_finite() {
            Ok(())
        } else {
            Err(Error::domain("median must be finite"))
        }
    }

    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64 {
        let d = column_y(data)[i] - theta[0];
        -PI.ln() - d.mul_add(d, 1.0).ln()
    }

    fn obs_score(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, self.unit_score(column_y(data)[i], theta[0])))
    }

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let h: f64 = column_y(data)
            .iter()
            .map(|&y| {
                let d = y - theta[0];
                let q = 1.0 + d * d;
                -2.0 * (1.0 - d * d) / (q * q)
            })
            .sum();
        Some(DMatrix::from_element(1, 1, h))
    }

    fn expected_information(&self, data: &Dataset, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, data.n() as f64 / 2.0))
    }

    fn initial_guess(&self, data: &Dataset) -> Option<DVector<f64>> {
        let mut y = data.column("y").ok()?.to_vec();
        y.sort_by(f64::total_cmp);
        let n = y.len();
        let med = if n % 2 == 1 { y[n / 2] } else { 0.5 * (y[n / 2 - 1] + y[n / 2]) };
        Some(DVector::from_element(1, med))
    }
}

impl ScalarModel for CauchyModel {
    fn unit_score(&self, y: f64, theta: f64) -> f64 {
        let d = y - theta;
        2.0 * d / (1.0 + d * d)
    }

    fn unit_information(&self, _theta: f64) -> f64 {
        0.5
    }

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        theta + (PI * (u - 0.5)).tan()
    }
}
