use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LikelihoodModel};
use crate::linalg::least_squares;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Response, design and optional variance covariates of a linear regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: Option<DMatrix<f64>>,
}

impl RegressionData {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: Option<DMatrix<f64>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::dim(format!("X has {} rows, y has {}", x.nrows(), y.len())));
        }
        if let Some(z) = &z {
            if z.nrows() != y.len() {
                return Err(Error::dim(format!("Z has {} rows, y has {}", z.nrows(), y.len())));
            }
        }
        Ok(RegressionData { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn fit(&self) -> Result<OlsFit> {
        ols(&self.y, &self.x)
    }
}

/// Least-squares fit: coefficients, residuals and the ML variance `RSS/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    pub sigma2: f64,
}

/// OLS of `y` on `x`; `RankError` when `x` lacks full column rank.
pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<OlsFit> {
    let beta = least_squares(x, y)?;
    let residuals = y - x * &beta;
    let rss = residuals.norm_squared();
    Ok(OlsFit { sigma2: rss / y.len() as f64, beta, residuals, rss })
}

/// Normal linear regression `y_i = x_i' beta + e_i`, `e_i ~ N(0, sigma2)`.
///
/// Parameters are `(beta', sigma2)`. The design is read from the named
/// columns of the dataset, preceded by a column of ones when `intercept` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    x_cols: Vec<String>,
    intercept: bool,
}

impl RegressionModel {
    pub fn new<S: Into<String>>(x_cols: impl IntoIterator<Item = S>, intercept: bool) -> Self {
        RegressionModel { x_cols: x_cols.into_iter().map(Into::into).collect(), intercept }
    }

    /// Number of regression coefficients `k`.
    pub fn k(&self) -> usize {
        self.x_cols.len() + usize::from(self.intercept)
    }

    pub fn design(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let cols: Vec<&[f64]> = self.x_cols.iter().map(|c| data.column(c)).collect::<Result<_>>()?;
        let off = usize::from(self.intercept);
        Ok(DMatrix::from_fn(data.n(), self.k(), |i, j| if j < off { 1.0 } else { cols[j - off][i] }))
    }

    pub fn regression_data(&self, data: &Dataset) -> Result<RegressionData> {
        RegressionData::new(DVector::from_column_slice(data.column("y")?), self.design(data)?, None)
    }

    fn row(&self, data: &Dataset, i: usize) -> DVector<f64> {
        let off = usize::from(self.intercept);
        DVector::from_fn(self.k(), |j, _| {
            if j < off {
                1.0
            } else {
                data.column(&self.x_cols[j - off]).expect("validated")[i]
            }
        })
    }

    pub(super) fn residual(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> (DVector<f64>, f64) {
        let x = self.row(data, i);
        let fitted = x.dot(&theta.rows(0, self.k()));
        let e = data.column("y").expect("validated")[i] - fitted;
        (x, e)
    }
}

impl LikelihoodModel for RegressionModel {
    fn name(&self) -> String {
        "ols".into()
    }

    fn dim(&self) -> usize {
        self.k() + 1
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        if self.intercept {
            names.push("const".to_string());
        }
        names.extend(self.x_cols.iter().cloned());
        names.push("sigma2".into());
        names
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        data.column("y")?;
        for c in &self.x_cols {
            data.column(c)?;
        }
        Ok(())
    }

    fn check_domain(&self, theta: &DVector<f64>) -> Result<()> {
        let s2 = theta[self.k()];
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::domain(format!("sigma2 = {s2} must be positive")));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(())
    }

    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64 {
        let s2 = theta[self.k()];
        let (_, e) = self.residual(data, i, theta);
        -0.5 * (LN_2PI + s2.ln()) - e * e / (2.0 * s2)
    }

    fn obs_score(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let k = self.k();
        let s2 = theta[k];
        let (x, e) = self.residual(data, i, theta);
        let mut s = DVector::zeros(k + 1);
        s.rows_mut(0, k).copy_from(&(x * (e / s2)));
        s[k] = -0.5 / s2 + e * e / (2.0 * s2 * s2);
        Some(s)
    }

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let k = self.k();
        let s2 = theta[k];
        let x = self.design(data).ok()?;
        let y = DVector::from_column_slice(data.column("y").ok()?);
        let e = &y - &x * theta.rows(0, k);
        let n = data.n() as f64;
        let mut h = DMatrix::zeros(k + 1, k + 1);
        h.view_mut((0, 0), (k, k)).copy_from(&(-(x.transpose() * &x) / s2));
        let cross = -(x.transpose() * &e) / (s2 * s2);
        h.view_mut((0, k), (k, 1)).copy_from(&cross);
        h.view_mut((k, 0), (1, k)).copy_from(&cross.transpose());
        h[(k, k)] = n / (2.0 * s2 * s2) - e.norm_squared() / (s2 * s2 * s2);
        Some(h)
    }

    fn expected_information(&self, data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let k = self.k();
        let s2 = theta[k];
        let x = self.design(data).ok()?;
        let mut info = DMatrix::zeros(k + 1, k + 1);
        info.view_mut((0, 0), (k, k)).copy_from(&(x.transpose() * &x / s2));
        info[(k, k)] = data.n() as f64 / (2.0 * s2 * s2);
        Some(info)
    }

    fn initial_guess(&self, data: &Dataset) -> Option<DVector<f64>> {
        let rd = self.regression_data(data).ok()?;
        let fit = rd.fit().ok()?;
        (fit.sigma2 > 0.0).then(|| {
            let mut t = DVector::zeros(self.k() + 1);
            t.rows_mut(0, self.k()).copy_from(&fit.beta);
            t[self.k()] = fit.sigma2;
            t
        })
    }
}
