use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LikelihoodModel};

/// Multinomial with `p` classes parameterized by the first `p - 1` cell
/// probabilities; the last is `1 - sum`.
///
/// Observations are individual class labels `0..p` in column `class`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialModel {
    classes: usize,
}

impl MultinomialModel {
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::domain("multinomial needs at least two classes"));
        }
        Ok(MultinomialModel { classes })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Expand class counts into one labelled row per observation.
    pub fn dataset_from_counts(counts: &[u64]) -> Result<Dataset> {
        let class: Vec<f64> = counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat_n(j as f64, c as usize))
            .collect();
        Dataset::new(vec![("class", class)])
    }

    /// Class counts `n_j` in a dataset.
    pub fn counts(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.validate_data(data)?;
        let mut counts = vec![0.0; self.classes];
        for &c in data.column("class")? {
            counts[c as usize] += 1.0;
        }
        Ok(counts)
    }

    fn full_probs(theta: &DVector<f64>) -> impl Iterator<Item = f64> + '_ {
        let last = 1.0 - theta.sum();
        theta.iter().copied().chain(std::iter::once(last))
    }

    fn class_of(data: &Dataset, i: usize) -> usize {
        data.column("class").expect("validated")[i] as usize
    }
}

impl LikelihoodModel for MultinomialModel {
    fn name(&self) -> String {
        "multinomial".into()
    }

    fn dim(&self) -> usize {
        self.classes - 1
    }

    fn param_names(&self) -> Vec<String> {
        (1..self.classes).map(|j| format!("theta{j}")).collect()
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        let c = data.column("class")?;
        match c.iter().position(|&v| v < 0.0 || v.fract() != 0.0 || v as usize >= self.classes) {
            Some(i) => Err(Error::domain(format!("class label {} at row {i} outside 0..{}", c[i], self.classes))),
            None => Ok(()),
        }
    }

    fn check_domain(&self, theta: &DVector<f64>) -> Result<()> {
        for (j, p) in Self::full_probs(theta).enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::domain(format!("cell probability {j} = {p} outside (0, 1)")));
            }
        }
        Ok(())
    }

    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64 {
        let c = Self::class_of(data, i);
        if c + 1 == self.classes {
            (1.0 - theta.sum()).ln()
        } else {
            theta[c].ln()
        }
    }

    fn obs_score(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let c = Self::class_of(data, i);
        let k = self.classes - 1;
        Some(if c == k {
            DVector::from_element(k, -1.0 / (1.0 - theta.sum()))
        } else {
            let mut s = DVector::zeros(k);
            s[c] = 1.0 / theta[c];
            s
        })
    }

    fn log_likelihood_sum(&self, data: &Dataset, theta: &DVector<f64>) -> f64 {
        let counts = self.counts(data).expect("validated");
        Self::full_probs(theta).zip(counts).map(|(p, n)| if n > 0.0 { n * p.ln() } else { 0.0 }).sum()
    }

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let counts = self.counts(data).ok()?;
        let k = self.classes - 1;
        let last = 1.0 - theta.sum();
        let tail = counts[k] / (last * last);
        Some(DMatrix::from_fn(k, k, |i, j| {
            let diag = if i == j { counts[i] / (theta[i] * theta[i]) } else { 0.0 };
            -(diag + tail)
        }))
    }

    fn expected_information(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = data.n() as f64;
        let k = self.classes - 1;
        let last = 1.0 - theta.sum();
        Some(DMatrix::from_fn(k, k, |i, j| n * (if i == j { 1.0 / theta[i] } else { 0.0 } + 1.0 / last)))
    }

    fn initial_guess(&self, data: &Dataset) -> Option<DVector<f64>> {
        let counts = self.counts(data).ok()?;
        let n = data.n() as f64;
        let k = self.classes as f64;
        // Half-count smoothing keeps the start interior when a cell is empty.
        Some(DVector::from_iterator(self.classes - 1, counts.iter().take(self.classes - 1).map(|c| (c + 0.5) / (n + 0.5 * k))))
    }
}

/// Pearson's `sum (O - E)^2 / E` for observed counts against cell probabilities `theta0`.
pub fn pearson_statistic(counts: &[f64], theta0: &[f64]) -> Result<f64> {
    if counts.len() != theta0.len() {
        return Err(Error::dim(format!("{} counts but {} probabilities", counts.len(), theta0.len())));
    }
    if theta0.iter().any(|&p| !(p > 0.0)) || (theta0.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::domain("null probabilities must be positive and sum to one"));
    }
    if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::domain("counts must be non-negative"));
    }
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return Err(Error::domain("total count must be positive"));
    }
    Ok(counts
        .iter()
        .zip(theta0)
        .map(|(&o, &p)| {
            let e = n * p;
            (o - e) * (o - e) / e
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{finite_diff_check, log_likelihood, ParamVector};

    #[test]
    fn pearson_of_reference_counts_is_twenty() {
        let p = pearson_statistic(&[10.0, 20.0, 30.0, 40.0], &[0.25; 4]).unwrap();
        assert_eq!(p, 20.0);
    }

    #[test]
    fn pearson_zero_when_counts_match() {
        assert_eq!(pearson_statistic(&[10.0, 30.0, 60.0], &[0.1, 0.3, 0.6]).unwrap(), 0.0);
    }

    #[test]
    fn loglik_is_sum_of_count_weighted_logs() {
        let m = MultinomialModel::new(4).unwrap();
        let d = MultinomialModel::dataset_from_counts(&[10, 20, 30, 40]).unwrap();
        let l = log_likelihood(&m, &d, &ParamVector::new(vec![0.1, 0.2, 0.3])).unwrap();
        let expected = 10.0 * 0.1f64.ln() + 20.0 * 0.2f64.ln() + 30.0 * 0.3f64.ln() + 40.0 * 0.4f64.ln();
        assert!((l - expected).abs() < 1e-10);
    }

    #[test]
    fn derivatives_match() {
        let m = MultinomialModel::new(3).unwrap();
        let d = MultinomialModel::dataset_from_counts(&[5, 9, 6]).unwrap();
        let r = finite_diff_check(&m, &d, &ParamVector::new(vec![0.3, 0.35])).unwrap();
        assert!(r.score_deviation < 1e-6 && r.hessian_deviation.unwrap() < 1e-6, "{r:?}");
    }

    #[test]
    fn bad_labels_rejected() {
        let m = MultinomialModel::new(3).unwrap();
        let d = Dataset::new(vec![("class", vec![0.0, 3.0])]).unwrap();
        assert!(m.validate_data(&d).is_err());
    }
}
