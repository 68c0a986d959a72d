use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{column_y, ScalarModel};
use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LikelihoodModel};

/// Bernoulli trials coded 0/1 in column `y`; the parameter is the success probability.
///
/// Used for sequences of triangle taste tests, where a judge guessing at
/// random succeeds with probability 1/3.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BernoulliModel;

impl BernoulliModel {
    pub fn new() -> Self {
        BernoulliModel
    }
}

impl LikelihoodModel for BernoulliModel {
    fn name(&self) -> String {
        "bernoulli".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["p".into()]
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        let y = data.column("y")?;
        match y.iter().position(|&v| v != 0.0 && v != 1.0) {
            Some(i) => Err(Error::domain(format!("bernoulli row {i}: value {} is not 0 or 1", y[i]))),
            None => Ok(()),
        }
    }

    fn check_domain(&self, theta: &DVector<f64>) -> Result<()> {
        if theta[0] > 0.0 && theta[0] < 1.0 {
            Ok(())
        } else {
            Err(Error::domain(format!("p = {} outside (0, 1)", theta[0])))
        }
    }

    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64 {
        let p = theta[0];
        if column_y(data)[i] == 1.0 {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    }

    fn obs_score(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, self.unit_score(column_y(data)[i], theta[0])))
    }

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = theta[0];
        let h: f64 = column_y(data).iter().map(|&y| -(y / (p * p) + (1.0 - y) / ((1.0 - p) * (1.0 - p)))).sum();
        Some(DMatrix::from_element(1, 1, h))
    }

    fn expected_information(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, data.n() as f64 * self.unit_information(theta[0])))
    }

    fn initial_guess(&self, data: &Dataset) -> Option<DVector<f64>> {
        let y = data.column("y").ok()?;
        let p = y.iter().sum::<f64>() / y.len() as f64;
        (p > 0.0 && p < 1.0).then(|| DVector::from_element(1, p))
    }
}

impl ScalarModel for BernoulliModel {
    fn unit_score(&self, y: f64, p: f64) -> f64 {
        (y - p) / (p * (1.0 - p))
    }

    fn unit_information(&self, p: f64) -> f64 {
        1.0 / (p * (1.0 - p))
    }

    /// `1{U < p}`, monotone in `p` for a fixed uniform draw.
    fn sample(&self, p: f64, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        if u < p {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{finite_diff_check, ParamVector};

    #[test]
    fn rejects_non_binary_values() {
        let d = Dataset::from_y(vec![0.0, 2.0]).unwrap();
        assert!(BernoulliModel.validate_data(&d).is_err());
    }

    #[test]
    fn derivatives_match() {
        let d = Dataset::from_y(vec![1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let r = finite_diff_check(&BernoulliModel, &d, &ParamVector::new(vec![0.4])).unwrap();
        assert!(r.score_deviation < 1e-6 && r.hessian_deviation.unwrap() < 1e-6);
    }
}
