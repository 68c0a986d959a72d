//! Regression specification tests in closed form: normality (Jarque-Bera),
//! skewness with and without the distribution-robust variance, and the
//! Breusch-Pagan / Koenker heteroskedasticity statistics.

use nalgebra::{DMatrix, DVector};

use super::regression::{ols, RegressionModel};
use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::linalg::least_squares;
use crate::result::{TestResult, Variant};
use crate::trinity::MomentCondition;

/// Skewness and excess-kurtosis moments `(e^3, e^4 - 3 sigma^4)` of a normal
/// linear regression, for use with [`crate::trinity::moment_test`].
///
/// With normal-theory expectations and all regression parameters free, the
/// moment test on these conditions is the Jarque-Bera statistic.
#[derive(Debug, Clone)]
pub struct NormalityMoments {
    model: RegressionModel,
}

impl NormalityMoments {
    pub fn new(model: RegressionModel) -> Self {
        NormalityMoments { model }
    }
}

impl MomentCondition for NormalityMoments {
    fn dim(&self) -> usize {
        2
    }

    fn moment(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> DVector<f64> {
        let s2 = theta[self.model.k()];
        let (_, e) = self.model.residual(data, i, theta);
        DVector::from_vec(vec![e.powi(3), e.powi(4) - 3.0 * s2 * s2])
    }

    fn model_variance(&self, data: &Dataset, theta: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let k = self.model.k();
        let s2 = theta[k];
        let n = data.n() as f64;
        let e_mm = DMatrix::from_diagonal(&DVector::from_vec(vec![15.0 * s2.powi(3) * n, 96.0 * s2.powi(4) * n]));
        let x = self.model.design(data).ok()?;
        let mut e_ms = DMatrix::zeros(2, k + 1);
        for j in 0..k {
            e_ms[(0, j)] = 3.0 * s2 * x.column(j).sum();
        }
        e_ms[(1, k)] = 6.0 * s2 * n;
        Some((e_mm, e_ms))
    }
}

/// Central sample moments `m_j = (1/n) sum e_i^j` of a residual vector.
///
/// Residuals are centered first, which is a no-op for OLS residuals from a
/// design with an intercept and makes the moments location-free otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMoments {
    pub n: usize,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m6: f64,
}

impl ResidualMoments {
    pub fn from_residuals(e: &[f64]) -> Result<Self> {
        if e.is_empty() {
            return Err(Error::DegenerateSample("no residuals".into()));
        }
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4, mut m6) = (0.0, 0.0, 0.0, 0.0);
        let mut scale = 0.0f64;
        for &v in e {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
            m6 += d2 * d2 * d2;
            scale = scale.max(v.abs());
        }
        let (m2, m3, m4, m6) = (m2 / n, m3 / n, m4 / n, m6 / n);
        if !(m2 > (f64::EPSILON * scale).powi(2)) {
            return Err(Error::DegenerateSample("residual variance m2 is zero".into()));
        }
        Ok(ResidualMoments { n: e.len(), m2, m3, m4, m6 })
    }

    /// Sample skewness `sqrt(b1) = m3 / m2^(3/2)`.
    pub fn sqrt_b1(&self) -> f64 {
        self.m3 / self.m2.powf(1.5)
    }

    pub fn b1(&self) -> f64 {
        self.sqrt_b1().powi(2)
    }

    /// Sample kurtosis `b2 = m4 / m2^2`.
    pub fn b2(&self) -> f64 {
        self.m4 / (self.m2 * self.m2)
    }
}

/// Smallest sample size for which the normality statistics are computed.
pub const MIN_NORMALITY_N: usize = 8;

/// `JB = n [b1/6 + (b2 - 3)^2 / 24]` on 2 degrees of freedom.
pub fn jarque_bera(residuals: &[f64]) -> Result<TestResult> {
    let mo = ResidualMoments::from_residuals(residuals)?;
    jarque_bera_from_moments(mo.n, mo.sqrt_b1(), mo.b2())
}

pub fn jarque_bera_from_moments(n: usize, sqrt_b1: f64, b2: f64) -> Result<TestResult> {
    if n < MIN_NORMALITY_N {
        return Err(Error::domain(format!("normality tests need n >= {MIN_NORMALITY_N}, got {n}")));
    }
    let n = n as f64;
    let stat = n * (sqrt_b1 * sqrt_b1 / 6.0 + (b2 - 3.0).powi(2) / 24.0);
    Ok(TestResult::chi2(Variant::JarqueBera, stat, 2)?
        .with_diagnostic("sqrt_b1", sqrt_b1)
        .with_diagnostic("b2", b2))
}

/// Asymptotic variance of `sqrt(n) sqrt(b1)` without assuming normality:
/// `9 + m6/m2^3 - 6 m4/m2^2`. Equals 6 at normal moments.
pub fn skewness_variance(m2: f64, m4: f64, m6: f64) -> f64 {
    9.0 + m6 / (m2 * m2 * m2) - 6.0 * m4 / (m2 * m2)
}

/// The standard skewness score test and its distribution-robust version.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewnessTests {
    /// `n b1 / 6`.
    pub standard: TestResult,
    /// `n b1 / (9 + m6/m2^3 - 6 m4/m2^2)`.
    pub robust: TestResult,
}

pub fn robust_skewness_test(residuals: &[f64]) -> Result<SkewnessTests> {
    let mo = ResidualMoments::from_residuals(residuals)?;
    robust_skewness_from_moments(mo.n, mo.m2, mo.m3, mo.m4, mo.m6)
}

pub fn robust_skewness_from_moments(n: usize, m2: f64, m3: f64, m4: f64, m6: f64) -> Result<SkewnessTests> {
    if n < MIN_NORMALITY_N {
        return Err(Error::domain(format!("normality tests need n >= {MIN_NORMALITY_N}, got {n}")));
    }
    if !(m2 > 0.0) {
        return Err(Error::DegenerateSample("residual variance m2 is zero".into()));
    }
    let b1 = m3 * m3 / (m2 * m2 * m2);
    let var = skewness_variance(m2, m4, m6);
    if !(var > 0.0) {
        return Err(Error::DegenerateSample(format!("robust skewness variance {var:.3e} is not positive")));
    }
    let nf = n as f64;
    Ok(SkewnessTests {
        standard: TestResult::chi2(Variant::Skewness, nf * b1 / 6.0, 1)?.with_diagnostic("variance", 6.0),
        robust: TestResult::chi2(Variant::SkewnessRobust, nf * b1 / var, 1)?.with_diagnostic("variance", var),
    })
}

/// Options shared by the Breusch-Pagan and Koenker statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeteroskedasticityOptions {
    /// Add a column of ones to `Z` (the variance equation's own intercept).
    pub intercept: bool,
}

impl Default for HeteroskedasticityOptions {
    fn default() -> Self {
        HeteroskedasticityOptions { intercept: true }
    }
}

struct VarianceRegression {
    explained: f64,
    sigma2: f64,
    nu_ss: f64,
    n: usize,
    r: usize,
}

/// `nu' Z (Z'Z)^{-1} Z' nu` with `nu_i = e_i^2 - sigma2` from the OLS residuals.
fn variance_regression(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    opts: HeteroskedasticityOptions,
) -> Result<VarianceRegression> {
    if z.nrows() != y.len() {
        return Err(Error::dim(format!("Z has {} rows, y has {}", z.nrows(), y.len())));
    }
    if z.ncols() == 0 {
        return Err(Error::domain("Z must have at least one column"));
    }
    let fit = ols(y, x)?;
    if !(fit.sigma2 > 0.0) {
        return Err(Error::DegenerateSample("residuals are identically zero".into()));
    }
    let nu = fit.residuals.map(|e| e * e - fit.sigma2);
    let zz = if opts.intercept {
        let mut m = DMatrix::from_element(z.nrows(), z.ncols() + 1, 1.0);
        m.view_mut((0, 1), (z.nrows(), z.ncols())).copy_from(z);
        m
    } else {
        z.clone()
    };
    let coef = least_squares(&zz, &nu).map_err(|e| match e {
        Error::Rank(_) => Error::Rank("variance covariates Z are rank deficient".into()),
        other => other,
    })?;
    let fitted = &zz * coef;
    Ok(VarianceRegression {
        explained: nu.dot(&fitted),
        sigma2: fit.sigma2,
        nu_ss: nu.norm_squared(),
        n: y.len(),
        r: z.ncols(),
    })
}

/// `BP = nu' Z (Z'Z)^{-1} Z' nu / (2 sigma^4)` on `cols(Z)` degrees of freedom.
pub fn breusch_pagan(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>, opts: HeteroskedasticityOptions) -> Result<TestResult> {
    let v = variance_regression(y, x, z, opts)?;
    let stat = v.explained / (2.0 * v.sigma2 * v.sigma2);
    Ok(TestResult::chi2(Variant::BreuschPagan, stat, v.r)?.with_diagnostic("sigma2", v.sigma2))
}

/// Koenker's studentized form: the BP numerator over `nu'nu / n`.
pub fn koenker(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>, opts: HeteroskedasticityOptions) -> Result<TestResult> {
    let v = variance_regression(y, x, z, opts)?;
    let denom = v.nu_ss / v.n as f64;
    if !(denom > 0.0) {
        return Err(Error::DegenerateSample("squared residuals have no variation".into()));
    }
    Ok(TestResult::chi2(Variant::Koenker, v.explained / denom, v.r)?.with_diagnostic("sigma2", v.sigma2))
}
