use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{column_y, ScalarModel};
use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LikelihoodModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// iid normal observations in column `y`.
///
/// With a known variance the only parameter is the mean; otherwise the
/// parameter vector is `(mu, sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModel {
    sigma2_known: Option<f64>,
}

impl NormalModel {
    /// Mean and variance both free.
    pub fn new() -> Self {
        NormalModel { sigma2_known: None }
    }

    /// Mean only, variance fixed at `sigma2`.
    pub fn mean_only(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain(format!("known variance must be positive, got {sigma2}")));
        }
        Ok(NormalModel { sigma2_known: Some(sigma2) })
    }

    pub fn known_variance(&self) -> Option<f64> {
        self.sigma2_known
    }

    fn unpack(&self, theta: &DVector<f64>) -> (f64, f64) {
        match self.sigma2_known {
            Some(s2) => (theta[0], s2),
            None => (theta[0], theta[1]),
        }
    }
}

impl Default for NormalModel {
    fn default() -> Self {
        Self::new()
    }
}

impl LikelihoodModel for NormalModel {
    fn name(&self) -> String {
        match self.sigma2_known {
            Some(_) => "normal-mean".into(),
            None => "normal".into(),
        }
    }

    fn dim(&self) -> usize {
        if self.sigma2_known.is_some() {
            1
        } else {
            2
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self.sigma2_known {
            Some(_) => vec!["mu".into()],
            None => vec!["mu".into(), "sigma2".into()],
        }
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        data.column("y").map(|_| ())
    }

    fn check_domain(&self, theta: &DVector<f64>) -> Result<()> {
        let (mu, s2) = self.unpack(theta);
        if !mu.is_finite() {
            return Err(Error::domain("mu must be finite"));
        }
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::domain(format!("sigma2 = {s2} must be positive")));
        }
        Ok(())
    }

    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64 {
        let (mu, s2) = self.unpack(theta);
        let e = column_y(data)[i] - mu;
        -0.5 * (LN_2PI + s2.ln()) - e * e / (2.0 * s2)
    }

    fn obs_score(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let (mu, s2) = self.unpack(theta);
        let e = column_y(data)[i] - mu;
        Some(match self.sigma2_known {
            Some(_) => DVector::from_element(1, e / s2),
            None => DVector::from_vec(vec![e / s2, -0.5 / s2 + e * e / (2.0 * s2 * s2)]),
        })
    }

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (mu, s2) = self.unpack(theta);
        let y = column_y(data);
        let n = y.len() as f64;
        if self.sigma2_known.is_some() {
            return Some(DMatrix::from_element(1, 1, -n / s2));
        }
        let (se, se2) = y.iter().fold((0.0, 0.0), |(a, b), &v| (a + (v - mu), b + (v - mu) * (v - mu)));
        let cross = -se / (s2 * s2);
        Some(DMatrix::from_row_slice(2, 2, &[-n / s2, cross, cross, n / (2.0 * s2 * s2) - se2 / (s2 * s2 * s2)]))
    }

    fn expected_information(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (_, s2) = self.unpack(theta);
        let n = data.n() as f64;
        Some(match self.sigma2_known {
            Some(_) => DMatrix::from_element(1, 1, n / s2),
            None => DMatrix::from_row_slice(2, 2, &[n / s2, 0.0, 0.0, n / (2.0 * s2 * s2)]),
        })
    }

    fn initial_guess(&self, data: &Dataset) -> Option<DVector<f64>> {
        let y = data.column("y").ok()?;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        match self.sigma2_known {
            Some(_) => Some(DVector::from_element(1, mean)),
            None => {
                let m2 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (m2 > 0.0).then(|| DVector::from_vec(vec![mean, m2]))
            }
        }
    }
}

impl ScalarModel for NormalModel {
    fn unit_score(&self, y: f64, theta: f64) -> f64 {
        (y - theta) / self.sigma2_known.unwrap_or(1.0)
    }

    fn unit_information(&self, _theta: f64) -> f64 {
        1.0 / self.sigma2_known.unwrap_or(1.0)
    }

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta + self.sigma2_known.unwrap_or(1.0).sqrt() * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{finite_diff_check, information, log_likelihood, score, InfoKind, ParamVector};

    #[test]
    fn loglik_of_two_zeros() {
        let m = NormalModel::new();
        let d = Dataset::from_y(vec![0.0, 0.0]).unwrap();
        let l = log_likelihood(&m, &d, &ParamVector::new(vec![0.0, 1.0])).unwrap();
        // -2 * 0.5 * ln(2 pi)
        assert!((l - (-1.8378770664093453)).abs() < 1e-12);
    }

    #[test]
    fn score_and_info_of_mean_model() {
        let m = NormalModel::mean_only(1.0).unwrap();
        // n = 100, ybar = 0.5
        let y: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let d = Dataset::from_y(y).unwrap();
        let t = ParamVector::new(vec![0.0]);
        assert!((score(&m, &d, &t).unwrap()[0] - 50.0).abs() < 1e-12);
        let info = information(&m, &d, &t, InfoKind::Expected).unwrap();
        assert_eq!(info.matrix[(0, 0)], 100.0);
        assert_eq!(info.used, InfoKind::Expected);
    }

    #[test]
    fn domain_violation_is_an_error() {
        let m = NormalModel::new();
        let d = Dataset::from_y(vec![1.0]).unwrap();
        assert!(matches!(log_likelihood(&m, &d, &ParamVector::new(vec![0.0, -1.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn analytic_derivatives_agree_with_differences() {
        let m = NormalModel::new();
        let d = Dataset::from_y(vec![0.3, -1.2, 2.2, 0.7, 1.1]).unwrap();
        let r = finite_diff_check(&m, &d, &ParamVector::new(vec![0.4, 1.3])).unwrap();
        assert!(r.score_deviation < 1e-6, "{r:?}");
        assert!(r.hessian_deviation.unwrap() < 1e-6, "{r:?}");
        assert!(!r.flagged);
    }
}
