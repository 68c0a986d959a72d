//! Model contract and the score / information machinery built on it.
//!
//! A [`LikelihoodModel`] supplies per-observation log-densities and, when it
//! can, analytic per-observation scores, an analytic Hessian and an analytic
//! expected information. Everything missing is filled in by central finite
//! differences with step `cbrt(eps) * max(1, |theta_j|)`.
//!
//! Three information estimates are produced at any point:
//! expected (`I`), observed (`K`, the negative Hessian) and outer product of
//! gradients (`J`). All are symmetrized right after computation.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, min_eigenvalue, symmetrize, COND_LIMIT};

/// Block label of a parameter coordinate: nuisance, tested, or possibly-misspecified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Gamma,
    Psi,
    Phi,
}

/// Parameter values with a gamma/psi/phi label on every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: DVector<f64>,
    labels: Vec<Block>,
}

impl ParamVector {
    /// All coordinates labelled as nuisance (`gamma`).
    pub fn new(values: Vec<f64>) -> Self {
        let labels = vec![Block::Gamma; values.len()];
        ParamVector { values: DVector::from_vec(values), labels }
    }

    pub fn from_vector(values: DVector<f64>) -> Self {
        let labels = vec![Block::Gamma; values.len()];
        ParamVector { values, labels }
    }

    pub fn with_labels(values: Vec<f64>, labels: Vec<Block>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::dim(format!("{} values but {} labels", values.len(), labels.len())));
        }
        Ok(ParamVector { values: DVector::from_vec(values), labels })
    }

    /// Concatenate `(gamma', psi', phi')'`.
    pub fn from_blocks(gamma: &[f64], psi: &[f64], phi: &[f64]) -> Self {
        let mut values = Vec::with_capacity(gamma.len() + psi.len() + phi.len());
        let mut labels = Vec::with_capacity(values.capacity());
        for (block, part) in [(Block::Gamma, gamma), (Block::Psi, psi), (Block::Phi, phi)] {
            values.extend_from_slice(part);
            labels.extend(std::iter::repeat_n(block, part.len()));
        }
        ParamVector { values: DVector::from_vec(values), labels }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[Block] {
        &self.labels
    }

    /// `(m, r, q)`: sizes of the gamma, psi and phi blocks.
    pub fn dims(&self) -> (usize, usize, usize) {
        let count = |b| self.labels.iter().filter(|&&l| l == b).count();
        (count(Block::Gamma), count(Block::Psi), count(Block::Phi))
    }

    pub fn indices(&self, block: Block) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == block).map(|(i, _)| i).collect()
    }

    /// Same labels, new values.
    pub fn with_values(&self, values: DVector<f64>) -> Self {
        assert_eq!(values.len(), self.labels.len(), "value length must match partition");
        ParamVector { values, labels: self.labels.clone() }
    }

    pub fn relabel(&self, labels: Vec<Block>) -> Result<Self> {
        Self::with_labels(self.values.iter().copied().collect(), labels)
    }
}

/// `n` rows of named real columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: IndexMap<String, Vec<f64>>,
    n: usize,
}

impl Dataset {
    pub fn new<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let mut map = IndexMap::new();
        let mut n = None;
        for (name, col) in columns {
            let name = name.into();
            match n {
                None => n = Some(col.len()),
                Some(len) if len != col.len() => {
                    return Err(Error::dim(format!("column '{name}' has {} rows, expected {len}", col.len())))
                }
                _ => {}
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::domain(format!("column '{name}' row {row} is missing or non-finite")));
            }
            if map.insert(name.clone(), col).is_some() {
                return Err(Error::domain(format!("duplicate column '{name}'")));
            }
        }
        let n = n.unwrap_or(0);
        if n == 0 {
            return Err(Error::domain("dataset must contain at least one observation"));
        }
        Ok(Dataset { columns: map, n })
    }

    /// Single column named `y`.
    pub fn from_y(y: Vec<f64>) -> Result<Self> {
        Self::new(vec![("y", y)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(|c| c.as_slice())
            .ok_or_else(|| Error::domain(format!("dataset has no column '{name}'")))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|k| k.as_str())
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n {
            return Err(Error::domain(format!("row range {start}..{end} invalid for n = {}", self.n)));
        }
        Self::new(self.columns.iter().map(|(k, v)| (k.clone(), v[start..end].to_vec())).collect())
    }

    /// Rows in the given order (used for relabeling checks).
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::dim("permutation length differs from n"));
        }
        Self::new(self.columns.iter().map(|(k, v)| (k.clone(), order.iter().map(|&i| v[i]).collect())).collect())
    }
}

/// The contract every model in the catalogue implements.
///
/// Only `log_density`, `dim`, `check_domain` and `name` are mandatory;
/// analytic derivatives are optional and replaced by finite differences.
pub trait LikelihoodModel: Send + Sync {
    fn name(&self) -> String;

    /// Number of parameters `p`.
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("theta{j}")).collect()
    }

    /// Check that the dataset has the columns and values the model needs.
    fn validate_data(&self, _data: &Dataset) -> Result<()> {
        Ok(())
    }

    /// Hard domain check; violations are errors, never penalties.
    fn check_domain(&self, theta: &DVector<f64>) -> Result<()>;

    /// `log f(y_i; theta)` for observation `i`.
    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64;

    /// Analytic per-observation score, if the model has one.
    fn obs_score(&self, _data: &Dataset, _i: usize, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// `l(theta)`; override when the sum has a cheaper closed form.
    fn log_likelihood_sum(&self, data: &Dataset, theta: &DVector<f64>) -> f64 {
        (0..data.n()).map(|i| self.log_density(data, i, theta)).sum()
    }

    /// `n x p` matrix whose rows are per-observation scores.
    fn score_matrix(&self, data: &Dataset, theta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.dim();
        let mut g = DMatrix::zeros(data.n(), p);
        for i in 0..data.n() {
            let s = self.obs_score(data, i, theta).unwrap_or_else(|| fd_gradient(|t| self.log_density(data, i, t), theta));
            g.row_mut(i).copy_from(&s.transpose());
        }
        g
    }

    /// Analytic Hessian of `l(theta)`, if available.
    fn hessian(&self, _data: &Dataset, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic expected (Fisher) information of the whole sample, if available.
    fn expected_information(&self, _data: &Dataset, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Closed-form starting value (method of moments or similar).
    fn initial_guess(&self, _data: &Dataset) -> Option<DVector<f64>> {
        None
    }
}

/// Central-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, theta: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(theta.len());
    let mut t = theta.clone();
    for j in 0..theta.len() {
        let h = fd_step(theta[j]);
        t[j] = theta[j] + h;
        let up = f(&t);
        t[j] = theta[j] - h;
        let down = f(&t);
        t[j] = theta[j];
        g[j] = (up - down) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector function (rows = outputs).
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let mut t = theta.clone();
    let mut cols = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = fd_step(theta[j]);
        t[j] = theta[j] + h;
        let up = f(&t);
        t[j] = theta[j] - h;
        let down = f(&t);
        t[j] = theta[j];
        cols.push((up - down) / (2.0 * h));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, theta.len(), |i, j| cols[j][i])
}

/// Which information estimate a statistic used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoKind {
    Expected,
    Observed,
    Opg,
}

impl std::fmt::Display for InfoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InfoKind::Expected => "expected",
            InfoKind::Observed => "observed",
            InfoKind::Opg => "opg",
        })
    }
}

impl std::str::FromStr for InfoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(InfoKind::Expected),
            "observed" => Ok(InfoKind::Observed),
            "opg" => Ok(InfoKind::Opg),
            other => Err(Error::UnknownName(format!("information kind '{other}'"))),
        }
    }
}

/// An information matrix together with how it was obtained.
#[derive(Debug, Clone)]
pub struct Information {
    pub matrix: DMatrix<f64>,
    pub requested: InfoKind,
    pub used: InfoKind,
    pub cond: f64,
    pub warnings: Vec<String>,
}

/// Score and the three information estimates at one point.
#[derive(Debug, Clone)]
pub struct ScoreBundle {
    pub score: DVector<f64>,
    pub info_expected: Option<DMatrix<f64>>,
    pub info_observed: DMatrix<f64>,
    pub info_opg: DMatrix<f64>,
}

fn prepare<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &DVector<f64>) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::domain("log-likelihood requires n >= 1"));
    }
    if theta.len() != model.dim() {
        return Err(Error::dim(format!("{} expects {} parameters, got {}", model.name(), model.dim(), theta.len())));
    }
    model.validate_data(data)?;
    model.check_domain(theta)
}

fn check_finite_vec(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} has non-finite entries")))
    }
}

fn check_finite_mat(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} has non-finite entries")))
    }
}

/// `l(theta) = sum_i log f(y_i; theta)`.
pub fn log_likelihood<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &ParamVector) -> Result<f64> {
    log_likelihood_at(model, data, theta.values())
}

pub(crate) fn log_likelihood_at<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &DVector<f64>) -> Result<f64> {
    prepare(model, data, theta)?;
    let l = model.log_likelihood_sum(data, theta);
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::Numeric(format!("{}: log-likelihood is {l}", model.name())))
    }
}

/// Score vector `S(theta)`, the sum of per-observation scores.
pub fn score<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &ParamVector) -> Result<DVector<f64>> {
    score_at(model, data, theta.values())
}

pub(crate) fn score_at<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
    prepare(model, data, theta)?;
    let g = model.score_matrix(data, theta);
    let s = DVector::from_iterator(g.ncols(), g.column_iter().map(|c| c.sum()));
    check_finite_vec(&s, "score")?;
    Ok(s)
}

/// Outer product of per-observation scores, `J = sum_i s_i s_i'`.
pub(crate) fn opg_at<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    prepare(model, data, theta)?;
    let g = model.score_matrix(data, theta);
    let mut j = g.transpose() * &g;
    symmetrize(&mut j);
    check_finite_mat(&j, "OPG information")?;
    Ok(j)
}

/// Observed information `K = -d2 l / d theta d theta'` (analytic or differenced score).
pub(crate) fn observed_at<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    prepare(model, data, theta)?;
    let h = match model.hessian(data, theta) {
        Some(h) => h,
        None => fd_jacobian(
            |t| {
                let g = model.score_matrix(data, t);
                DVector::from_iterator(g.ncols(), g.column_iter().map(|c| c.sum()))
            },
            theta,
        ),
    };
    let mut k = -h;
    symmetrize(&mut k);
    check_finite_mat(&k, "observed information")?;
    Ok(k)
}

/// Information matrix of the requested kind.
///
/// `Expected` falls back to `Observed` (noted in `warnings`) when the model has
/// no analytic expected information. A condition number above `1e12` is
/// recorded as a singularity warning, not an error.
pub fn information<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    theta: &ParamVector,
    kind: InfoKind,
) -> Result<Information> {
    information_at(model, data, theta.values(), kind)
}

pub(crate) fn information_at<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    theta: &DVector<f64>,
    kind: InfoKind,
) -> Result<Information> {
    prepare(model, data, theta)?;
    let mut warnings = Vec::new();
    let (matrix, used) = match kind {
        InfoKind::Expected => match model.expected_information(data, theta) {
            Some(mut m) => {
                symmetrize(&mut m);
                check_finite_mat(&m, "expected information")?;
                (m, InfoKind::Expected)
            }
            None => {
                warnings.push("expected information unavailable; observed information substituted".to_string());
                (observed_at(model, data, theta)?, InfoKind::Observed)
            }
        },
        InfoKind::Observed => (observed_at(model, data, theta)?, InfoKind::Observed),
        InfoKind::Opg => (opg_at(model, data, theta)?, InfoKind::Opg),
    };
    let cond = condition_number(&matrix);
    if !(cond <= COND_LIMIT) {
        warnings.push(format!("singularity warning: condition number {cond:.3e}"));
    }
    Ok(Information { matrix, requested: kind, used, cond, warnings })
}

/// Default information: expected if analytic, else observed.
pub fn default_information<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &ParamVector) -> Result<Information> {
    information(model, data, theta, InfoKind::Expected)
}

pub fn score_bundle<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &ParamVector) -> Result<ScoreBundle> {
    let t = theta.values();
    let score = score_at(model, data, t)?;
    let info_expected = model.expected_information(data, t).map(|mut m| {
        symmetrize(&mut m);
        m
    });
    Ok(ScoreBundle { score, info_expected, info_observed: observed_at(model, data, t)?, info_opg: opg_at(model, data, t)? })
}

/// Deviation of analytic derivatives from central finite differences.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max over coordinates of `|analytic - fd| / max(1, |fd|)` for the score.
    pub score_deviation: f64,
    /// Same measure for the Hessian, when the model supplies one.
    pub hessian_deviation: Option<f64>,
    pub flagged: bool,
}

/// Threshold above which [`finite_diff_check`] flags a model.
pub const FD_FLAG_THRESHOLD: f64 = 1e-2;

/// Compare analytic score (and Hessian) against central differences of `l`.
pub fn finite_diff_check<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &ParamVector) -> Result<FdReport> {
    let t = theta.values();
    prepare(model, data, t)?;
    let analytic = score_at(model, data, t)?;
    let numeric = fd_gradient(|x| model.log_likelihood_sum(data, x), t);
    let score_deviation = relative_deviation(analytic.iter(), numeric.iter());
    let hessian_deviation = model.hessian(data, t).map(|h| {
        let numeric = fd_jacobian(|x| {
            let g = model.score_matrix(data, x);
            DVector::from_iterator(g.ncols(), g.column_iter().map(|c| c.sum()))
        }, t);
        relative_deviation(h.iter(), numeric.iter())
    });
    let worst = score_deviation.max(hessian_deviation.unwrap_or(0.0));
    Ok(FdReport { score_deviation, hessian_deviation, flagged: !(worst <= FD_FLAG_THRESHOLD) })
}

fn relative_deviation<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// True when the smallest eigenvalue is at least `-tol * max(1, trace)`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol * m.trace().abs().max(1.0)
}
