//! The classical trio (score, Wald, likelihood ratio), the Lagrange-multiplier
//! form of the score test, the one-sided score test and moment tests.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{lagrange_multipliers, FitResult, Fits, Restriction};
use crate::likelihood::{information_at, opg_at, score_at, Dataset, InfoKind, Information, LikelihoodModel, ParamVector};
use crate::linalg::{rank, submatrix, SpdFactor};
use crate::result::{TestResult, Variant};

/// Tolerated round-off below zero before a negative LR is treated as a failed fit.
pub const LR_NEGATIVE_LIMIT: f64 = 1e-6;

fn attach(result: TestResult, info: &Information) -> TestResult {
    result
        .with_info(info.used)
        .with_notes(info.warnings.iter().cloned())
        .with_diagnostic("info_cond", info.cond)
}

fn check_jacobian(h: &DMatrix<f64>, r: usize, p: usize) -> Result<()> {
    if h.nrows() != r || h.ncols() != p {
        return Err(Error::dim(format!("restriction Jacobian is {}x{}, expected {r}x{p}", h.nrows(), h.ncols())));
    }
    if rank(h, 1e-10) < r {
        return Err(Error::Rank(format!("restriction Jacobian has rank below {r}")));
    }
    Ok(())
}

/// `RS = S(theta~)' I(theta~)^-1 S(theta~)` on `r` degrees of freedom.
pub fn rao_score_test<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    restricted: &FitResult,
    kind: InfoKind,
) -> Result<TestResult> {
    let t = restricted.theta.values();
    let s = score_at(model, data, t)?;
    let info = information_at(model, data, t, kind)?;
    let stat = SpdFactor::new(&info.matrix, "information at the restricted estimate")?.quad_inv(&s);
    Ok(attach(TestResult::chi2(Variant::Rs, stat, restriction.r())?, &info))
}

/// `W = (h(theta^) - c)' [H I^-1 H']^-1 (h(theta^) - c)` on `r` degrees of freedom.
pub fn wald_test<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    unrestricted: &FitResult,
    kind: InfoKind,
) -> Result<TestResult> {
    let t = unrestricted.theta.values();
    let p = model.dim();
    let hj = restriction.jacobian(t);
    check_jacobian(&hj, restriction.r(), p)?;
    let d = restriction.discrepancy(t);
    let info = information_at(model, data, t, kind)?;
    let inv_i_ht = SpdFactor::new(&info.matrix, "information at the unrestricted estimate")?.solve_mat(&hj.transpose());
    let cov = &hj * inv_i_ht;
    let stat = SpdFactor::new(&cov, "covariance of h(theta^)")?.quad_inv(&d);
    Ok(attach(TestResult::chi2(Variant::Wald, stat, restriction.r())?, &info))
}

/// `LR = 2 [l(theta^) - l(theta~)]`; slightly negative values are clamped to zero.
pub fn lr_test(restriction: &Restriction, fits: &Fits) -> Result<TestResult> {
    let lr = 2.0 * (fits.unrestricted.loglik - fits.restricted.loglik);
    if !lr.is_finite() {
        return Err(Error::Numeric(format!("LR statistic is {lr}")));
    }
    let scale = 1.0 + fits.unrestricted.loglik.abs();
    if lr < -LR_NEGATIVE_LIMIT * scale {
        return Err(Error::NegativeLr(lr));
    }
    let mut result = TestResult::chi2(Variant::Lr, lr.max(0.0), restriction.r())?;
    if lr < 0.0 {
        result = result.with_note(format!("LR of {lr:.3e} clamped to 0"));
    }
    Ok(result)
}

/// `LM = lambda~' H I^-1 H' lambda~`, equal to the score statistic.
pub fn lm_form_test<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    restricted: &FitResult,
    kind: InfoKind,
) -> Result<TestResult> {
    let lambda = lagrange_multipliers(restricted)?;
    let t = restricted.theta.values();
    let hj = restriction.jacobian(t);
    check_jacobian(&hj, restriction.r(), model.dim())?;
    let info = information_at(model, data, t, kind)?;
    let v = hj.transpose() * lambda;
    let stat = SpdFactor::new(&info.matrix, "information at the restricted estimate")?.quad_inv(&v);
    Ok(attach(TestResult::chi2(Variant::Lm, stat, restriction.r())?, &info))
}

/// Side of a one-sided alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Greater,
    Less,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Greater => 1.0,
            Direction::Less => -1.0,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(Direction::Greater),
            "less" => Ok(Direction::Less),
            other => Err(Error::UnknownName(format!("direction '{other}' (expected greater or less)"))),
        }
    }
}

/// `z = +-S(theta0) / sqrt(I(theta0))` for a scalar-parameter model.
pub fn one_sided_score_test<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    theta0: &ParamVector,
    direction: Direction,
    kind: InfoKind,
) -> Result<TestResult> {
    if model.dim() != 1 {
        return Err(Error::domain(format!(
            "one-sided score test needs a scalar parameter; {} has {}",
            model.name(),
            model.dim()
        )));
    }
    one_sided_score_test_at(model, data, theta0, 0, direction, kind)
}

/// One-sided score test on coordinate `index` at a restricted estimate.
///
/// Nuisance coordinates enter through the efficient information
/// `I_psi - I_psi,gamma I_gamma^-1 I_gamma,psi`.
pub fn one_sided_score_test_at<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    theta_tilde: &ParamVector,
    index: usize,
    direction: Direction,
    kind: InfoKind,
) -> Result<TestResult> {
    let p = model.dim();
    if index >= p {
        return Err(Error::domain(format!("index {index} out of range for p = {p}")));
    }
    let t = theta_tilde.values();
    let s = score_at(model, data, t)?;
    let info = information_at(model, data, t, kind)?;
    let rest: Vec<usize> = (0..p).filter(|&j| j != index).collect();
    let mut eff = info.matrix[(index, index)];
    if !rest.is_empty() {
        let i_gg = submatrix(&info.matrix, &rest, &rest);
        let i_gp = submatrix(&info.matrix, &rest, &[index]);
        eff -= (i_gp.transpose() * SpdFactor::new(&i_gg, "nuisance information")?.solve_mat(&i_gp))[(0, 0)];
    }
    if !(eff > 0.0) {
        return Err(Error::SingularInfo(format!("efficient information {eff:.3e} is not positive")));
    }
    let z = direction.sign() * s[index] / eff.sqrt();
    Ok(attach(TestResult::one_sided(Variant::OneSidedScore, z)?, &info))
}

/// Moment restrictions `E[m(y_i; theta)] = 0` to be tested.
pub trait MomentCondition: Send + Sync {
    /// Number of moments `r`.
    fn dim(&self) -> usize;

    /// `m(y_i; theta)`.
    fn moment(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> DVector<f64>;

    /// Model-implied `(sum_i E[m m'], sum_i E[m s'])` (`r x r` and `r x p`), if known.
    fn model_variance(&self, _data: &Dataset, _theta: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }
}

/// Moment condition built from a closure, with outer-product variance only.
pub struct MomentFn<F> {
    dim: usize,
    f: F,
}

impl<F> MomentFn<F>
where
    F: Fn(&Dataset, usize, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        MomentFn { dim, f }
    }
}

impl<F> MomentCondition for MomentFn<F>
where
    F: Fn(&Dataset, usize, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn moment(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> DVector<f64> {
        (self.f)(data, i, theta)
    }
}

/// How the variance of the summed moments is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentVariance {
    /// Outer products of the stacked (moment, score) contributions.
    #[default]
    Opg,
    /// Model-implied expectations from [`MomentCondition::model_variance`].
    ModelBased,
}

/// Moment test at the restricted estimate.
///
/// With `M = sum_i m_i` and nuisance coordinates `free` (estimated under the
/// null), the statistic is `M' (V_mm - V_ms V_ss^-1 V_sm)^-1 M` on `r` degrees
/// of freedom. The correction removes the effect of estimating the nuisance
/// parameters.
pub fn moment_test<M: LikelihoodModel + ?Sized, C: MomentCondition + ?Sized>(
    model: &M,
    data: &Dataset,
    condition: &C,
    theta_tilde: &ParamVector,
    free: &[usize],
    variance: MomentVariance,
) -> Result<TestResult> {
    let t = theta_tilde.values();
    let r = condition.dim();
    let n = data.n();
    if r == 0 {
        return Err(Error::domain("moment test needs at least one moment"));
    }
    let mut m_mat = DMatrix::zeros(n, r);
    for i in 0..n {
        let m = condition.moment(data, i, t);
        if m.len() != r {
            return Err(Error::dim(format!("moment function returned {} values, expected {r}", m.len())));
        }
        m_mat.row_mut(i).copy_from(&m.transpose());
    }
    if m_mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("moment function returned non-finite values".into()));
    }
    let total = DVector::from_iterator(r, m_mat.column_iter().map(|c| c.sum()));

    let (v_mm, v_ms, v_ss, kind) = match variance {
        MomentVariance::Opg => {
            let scores = model.score_matrix(data, t);
            let s_free = DMatrix::from_fn(n, free.len(), |i, j| scores[(i, free[j])]);
            (m_mat.transpose() * &m_mat, m_mat.transpose() * &s_free, opg_at(model, data, t).map(|j| submatrix(&j, free, free))?, InfoKind::Opg)
        }
        MomentVariance::ModelBased => {
            let (e_mm, e_ms) = condition
                .model_variance(data, t)
                .ok_or_else(|| Error::Absent("moment condition has no model-based variance".into()))?;
            let info = information_at(model, data, t, InfoKind::Expected)?;
            let cols: Vec<usize> = free.to_vec();
            let rows: Vec<usize> = (0..r).collect();
            (e_mm, submatrix(&e_ms, &rows, &cols), submatrix(&info.matrix, free, free), info.used)
        }
    };
    let mut cov = v_mm;
    if !free.is_empty() {
        let proj = SpdFactor::new(&v_ss, "nuisance score variance")?.solve_mat(&v_ms.transpose());
        cov -= &v_ms * proj;
    }
    let stat = SpdFactor::new(&cov, "moment variance")?.quad_inv(&total);
    Ok(TestResult::chi2(Variant::Moment, stat, r)?.with_info(kind))
}

/// All of RS, Wald, LR and LM for one restriction.
pub fn trinity<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    fits: &Fits,
    kind: InfoKind,
) -> Result<Vec<TestResult>> {
    Ok(vec![
        rao_score_test(model, data, restriction, &fits.restricted, kind)?,
        wald_test(model, data, restriction, &fits.unrestricted, kind)?,
        lr_test(restriction, fits)?,
        lm_form_test(model, data, restriction, &fits.restricted, kind)?,
    ])
}
