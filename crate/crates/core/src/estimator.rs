//! Unrestricted and restricted maximum likelihood.
//!
//! Both fits use Newton steps on the observed information with Armijo
//! backtracking. When the observed information is not positive definite it is
//! shifted by `tau * I`, which turns the step towards steepest ascent. Domain
//! violations during a line search shrink the step; they are never penalized.
//!
//! General restrictions `h(theta) = c` are solved by Newton on the KKT system
//! `S(theta) - H(theta)' lambda = 0`, `h(theta) = c`, with `H` stored `r x p`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{
    fd_jacobian, log_likelihood_at, observed_at, score_at, Dataset, LikelihoodModel, ParamVector,
};
use crate::linalg::{max_abs, min_eigenvalue, rank, subvector, submatrix};

type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A null hypothesis.
#[derive(Clone)]
pub enum Restriction {
    /// `theta[indices[k]] = values[k]`.
    SubsetFix { indices: Vec<usize>, values: Vec<f64> },
    /// `h(theta) = c` with `r x p` Jacobian `H` (finite differences when absent).
    General { h: VecFn, c: DVector<f64>, jacobian: Option<MatFn>, linear: bool },
}

impl fmt::Debug for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Restriction::SubsetFix { indices, values } => {
                f.debug_struct("SubsetFix").field("indices", indices).field("values", values).finish()
            }
            Restriction::General { c, linear, .. } => f.debug_struct("General").field("c", c).field("linear", linear).finish(),
        }
    }
}

impl Restriction {
    pub fn subset(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::dim(format!("{} indices but {} values", indices.len(), values.len())));
        }
        if indices.is_empty() {
            return Err(Error::domain("restriction must fix at least one coordinate"));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("restricted indices must be distinct"));
        }
        Ok(Restriction::SubsetFix { indices, values })
    }

    /// Linear restriction `R theta = c`.
    pub fn linear(r: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if r.nrows() != c.len() {
            return Err(Error::dim(format!("R has {} rows, c has {}", r.nrows(), c.len())));
        }
        let rr = Arc::new(r);
        let r1 = Arc::clone(&rr);
        Ok(Restriction::General {
            h: Arc::new(move |t| &*r1 * t),
            c,
            jacobian: Some(Arc::new(move |_| (*rr).clone())),
            linear: true,
        })
    }

    /// Nonlinear restriction `h(theta) = c`; `jacobian` may be omitted.
    pub fn general(
        h: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        c: DVector<f64>,
        jacobian: Option<MatFn>,
    ) -> Self {
        Restriction::General { h: Arc::new(h), c, jacobian, linear: false }
    }

    /// Number of restrictions `r`.
    pub fn r(&self) -> usize {
        match self {
            Restriction::SubsetFix { indices, .. } => indices.len(),
            Restriction::General { c, .. } => c.len(),
        }
    }

    pub fn is_subset(&self) -> bool {
        matches!(self, Restriction::SubsetFix { .. })
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.r() > p {
            return Err(Error::dim(format!("{} restrictions on {p} parameters", self.r())));
        }
        if let Restriction::SubsetFix { indices, .. } = self {
            if let Some(&i) = indices.iter().find(|&&i| i >= p) {
                return Err(Error::domain(format!("restricted index {i} out of range for p = {p}")));
            }
        }
        Ok(())
    }

    /// `h(theta) - c`.
    pub fn discrepancy(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Restriction::SubsetFix { indices, values } => {
                DVector::from_fn(indices.len(), |k, _| theta[indices[k]] - values[k])
            }
            Restriction::General { h, c, .. } => h(theta) - c,
        }
    }

    /// `H(theta)`, `r x p`.
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Restriction::SubsetFix { indices, .. } => {
                let mut m = DMatrix::zeros(indices.len(), theta.len());
                for (k, &i) in indices.iter().enumerate() {
                    m[(k, i)] = 1.0;
                }
                m
            }
            Restriction::General { jacobian: Some(j), .. } => j(theta),
            Restriction::General { h, jacobian: None, .. } => fd_jacobian(|t| h(t), theta),
        }
    }

    fn is_linear(&self) -> bool {
        match self {
            Restriction::SubsetFix { .. } => true,
            Restriction::General { linear, .. } => *linear,
        }
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence when `||S||_inf < tol * (1 + |l|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-8, max_iter: 200 }
    }
}

/// Outcome of a maximum likelihood fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ParamVector,
    pub loglik: f64,
    /// Lagrange multipliers; `None` for an unrestricted fit.
    pub lambda: Option<DVector<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Non-fatal diagnostics such as a non-concave optimum.
    pub warnings: Vec<String>,
}

/// Warning text attached when the observed information at the optimum is not PSD.
pub const NON_CONCAVE_WARNING: &str = "NonConcaveWarning: observed information is not positive semidefinite at the optimum";

/// Multipliers of a restricted fit.
pub fn lagrange_multipliers(fit: &FitResult) -> Result<DVector<f64>> {
    fit.lambda.clone().ok_or_else(|| Error::Absent("unrestricted fit carries no Lagrange multipliers".into()))
}

/// Model-supplied closed-form starting value.
pub fn initial_point<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset) -> Result<ParamVector> {
    model.validate_data(data)?;
    let t = model
        .initial_guess(data)
        .ok_or_else(|| Error::domain(format!("{} has no closed-form start for this sample; supply one", model.name())))?;
    Ok(ParamVector::from_vector(t))
}

struct Outcome {
    x: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
    iterations: usize,
}

/// Newton ascent with a shifted Hessian and Armijo backtracking.
///
/// `eval` returns value, gradient and negative Hessian; `value` only the
/// objective. Either returns an error outside the domain.
fn newton_maximize(
    eval: impl Fn(&DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)>,
    value: impl Fn(&DVector<f64>) -> Result<f64>,
    x0: DVector<f64>,
    opts: FitOptions,
) -> Result<Outcome> {
    let mut x = x0;
    let (mut l, mut g, mut k) = eval(&x)?;
    for it in 0..opts.max_iter {
        if max_abs(&g) < opts.tol * (1.0 + l.abs()) {
            // One extra full Newton step: quadratic convergence takes the
            // iterate to rounding level at negligible cost.
            let cand = &x + ascent_direction(&k, &g);
            if let Ok((lc, gc, _)) = eval(&cand) {
                if lc.is_finite() && lc >= l - 1e-12 * (1.0 + l.abs()) && max_abs(&gc) <= max_abs(&g) {
                    return Ok(Outcome { x: cand, value: lc, grad: gc, iterations: it + 1 });
                }
            }
            return Ok(Outcome { x, value: l, grad: g, iterations: it });
        }
        let d = ascent_direction(&k, &g);
        let slope = g.dot(&d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &d * t;
            if let Ok(lc) = value(&cand) {
                if lc.is_finite() && lc >= l + 1e-4 * t * slope {
                    accepted = Some(cand);
                    break;
                }
                // Near the optimum the objective is flat to rounding; accept if the gradient still shrinks.
                if lc >= l - 1e-12 * (1.0 + l.abs()) {
                    if let Ok((_, gc, _)) = eval(&cand) {
                        if max_abs(&gc) < max_abs(&g) {
                            accepted = Some(cand);
                            break;
                        }
                    }
                }
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::NoConvergence { iterations: it, gradient_norm: max_abs(&g) });
        };
        x = next;
        (l, g, k) = eval(&x)?;
    }
    if max_abs(&g) < opts.tol * (1.0 + l.abs()) {
        return Ok(Outcome { x, value: l, grad: g, iterations: opts.max_iter });
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, gradient_norm: max_abs(&g) })
}

/// Solve `(K + tau I) d = g` with the smallest shift that makes the system positive definite.
fn ascent_direction(k: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = k.diagonal().abs().max().max(1e-12);
    let mut tau = 0.0;
    for _ in 0..40 {
        let shifted = k + DMatrix::identity(k.nrows(), k.ncols()) * tau;
        if let Some(ch) = shifted.cholesky() {
            let d = ch.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        tau = if tau == 0.0 { 1e-8 * scale } else { tau * 10.0 };
    }
    g / scale
}

fn non_concave(k: &DMatrix<f64>) -> bool {
    k.nrows() > 0 && min_eigenvalue(k) < -1e-8 * k.trace().abs().max(1.0)
}

/// Unconstrained MLE from `theta_init`.
pub fn fit_unrestricted<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    theta_init: &ParamVector,
    opts: FitOptions,
) -> Result<FitResult> {
    let x0 = theta_init.values().clone();
    log_likelihood_at(model, data, &x0)?;
    let eval = |t: &DVector<f64>| -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        Ok((log_likelihood_at(model, data, t)?, score_at(model, data, t)?, observed_at(model, data, t)?))
    };
    let out = newton_maximize(eval, |t| log_likelihood_at(model, data, t), x0, opts)?;
    let mut warnings = Vec::new();
    if non_concave(&observed_at(model, data, &out.x)?) {
        warnings.push(NON_CONCAVE_WARNING.to_string());
    }
    Ok(FitResult {
        gradient_norm: max_abs(&out.grad),
        theta: theta_init.with_values(out.x),
        loglik: out.value,
        lambda: None,
        converged: true,
        iterations: out.iterations,
        warnings,
    })
}

/// MLE under `restriction`, with its Lagrange multipliers.
pub fn fit_restricted<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    theta_init: &ParamVector,
    opts: FitOptions,
) -> Result<FitResult> {
    let p = model.dim();
    if theta_init.len() != p {
        return Err(Error::dim(format!("{} expects {p} parameters, got {}", model.name(), theta_init.len())));
    }
    restriction.validate(p)?;
    match restriction {
        Restriction::SubsetFix { indices, values } => fit_subset(model, data, indices, values, theta_init, opts),
        Restriction::General { .. } => fit_general(model, data, restriction, theta_init, opts),
    }
}

fn fit_subset<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    indices: &[usize],
    values: &[f64],
    theta_init: &ParamVector,
    opts: FitOptions,
) -> Result<FitResult> {
    let p = model.dim();
    let free: Vec<usize> = (0..p).filter(|i| !indices.contains(i)).collect();
    let mut base = theta_init.values().clone();
    for (&i, &v) in indices.iter().zip(values) {
        base[i] = v;
    }
    let embed = |z: &DVector<f64>| {
        let mut t = base.clone();
        for (k, &i) in free.iter().enumerate() {
            t[i] = z[k];
        }
        t
    };
    let (x, iterations) = if free.is_empty() {
        (base.clone(), 0)
    } else {
        let eval = |z: &DVector<f64>| -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
            let t = embed(z);
            let l = log_likelihood_at(model, data, &t)?;
            let s = score_at(model, data, &t)?;
            let k = observed_at(model, data, &t)?;
            Ok((l, subvector(&s, &free), submatrix(&k, &free, &free)))
        };
        let out = newton_maximize(eval, |z| log_likelihood_at(model, data, &embed(z)), subvector(&base, &free), opts)?;
        (embed(&out.x), out.iterations)
    };
    let loglik = log_likelihood_at(model, data, &x)?;
    let s = score_at(model, data, &x)?;
    let mut warnings = Vec::new();
    if !free.is_empty() {
        let k = observed_at(model, data, &x)?;
        if non_concave(&submatrix(&k, &free, &free)) {
            warnings.push(NON_CONCAVE_WARNING.to_string());
        }
    }
    Ok(FitResult {
        gradient_norm: max_abs(&subvector(&s, &free)),
        lambda: Some(subvector(&s, indices)),
        theta: theta_init.with_values(x),
        loglik,
        converged: true,
        iterations,
        warnings,
    })
}

fn fit_general<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    theta_init: &ParamVector,
    opts: FitOptions,
) -> Result<FitResult> {
    let p = model.dim();
    let r = restriction.r();
    let mut theta = theta_init.values().clone();
    log_likelihood_at(model, data, &theta)?;
    let h0 = restriction.jacobian(&theta);
    if h0.nrows() != r || h0.ncols() != p {
        return Err(Error::dim(format!("restriction Jacobian is {}x{}, expected {r}x{p}", h0.nrows(), h0.ncols())));
    }
    if rank(&h0, 1e-10) < r {
        return Err(Error::Rank(format!("restriction Jacobian has rank below {r} at the starting point")));
    }
    // Start the multipliers at the least-squares solution of S = H' lambda.
    let s0 = score_at(model, data, &theta)?;
    let mut lambda = h0.transpose().svd(true, true).solve(&s0, 1e-12).map_err(|e| Error::Numeric(e.to_string()))?;

    let residual = |t: &DVector<f64>, lam: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let l = log_likelihood_at(model, data, t)?;
        let s = score_at(model, data, t)?;
        let hj = restriction.jacobian(t);
        let mut f = DVector::zeros(p + r);
        f.rows_mut(0, p).copy_from(&(s - hj.transpose() * lam));
        f.rows_mut(p, r).copy_from(&restriction.discrepancy(t));
        Ok((f, l))
    };
    let converged = |f: &DVector<f64>, l: f64| {
        max_abs(&f.rows(0, p).into_owned()) < opts.tol * (1.0 + l.abs()) && max_abs(&f.rows(p, r).into_owned()) < opts.tol
    };

    let kkt_step = |theta: &DVector<f64>, lambda: &DVector<f64>, f: &DVector<f64>| -> Result<DVector<f64>> {
        let hj = restriction.jacobian(theta);
        // Hessian of the Lagrangian: -K minus the curvature of h weighted by lambda.
        let mut hess = -observed_at(model, data, theta)?;
        if !restriction.is_linear() {
            hess -= fd_jacobian(|t| restriction.jacobian(t).transpose() * lambda, theta);
        }
        let mut kkt = DMatrix::zeros(p + r, p + r);
        kkt.view_mut((0, 0), (p, p)).copy_from(&hess);
        kkt.view_mut((0, p), (p, r)).copy_from(&(-hj.transpose()));
        kkt.view_mut((p, 0), (r, p)).copy_from(&hj);
        kkt.clone()
            .lu()
            .solve(&(-f))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .or_else(|| kkt.svd(true, true).solve(&(-f), 1e-12).ok())
            .ok_or_else(|| Error::Numeric("KKT system could not be solved".into()))
    };

    let (mut f, mut l) = residual(&theta, &lambda)?;
    let mut iterations = 0;
    while !converged(&f, l) {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, gradient_norm: max_abs(&f) });
        }
        iterations += 1;
        let step = kkt_step(&theta, &lambda, &f)?;
        let merit = f.norm_squared();
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &theta + step.rows(0, p) * t;
            let cand_lambda = &lambda + step.rows(p, r) * t;
            if let Ok((fc, lc)) = residual(&cand, &cand_lambda) {
                if fc.norm_squared() <= (1.0 - 1e-4 * t) * merit || converged(&fc, lc) {
                    theta = cand;
                    lambda = cand_lambda;
                    f = fc;
                    l = lc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            return Err(Error::NoConvergence { iterations, gradient_norm: max_abs(&f) });
        }
    }
    // Full Newton steps past the tolerance while they still shrink the residual.
    for _ in 0..3 {
        let Ok(step) = kkt_step(&theta, &lambda, &f) else { break };
        let cand = &theta + step.rows(0, p);
        let cand_lambda = &lambda + step.rows(p, r);
        match residual(&cand, &cand_lambda) {
            Ok((fc, lc)) if fc.norm_squared() < f.norm_squared() => {
                theta = cand;
                lambda = cand_lambda;
                f = fc;
                l = lc;
            }
            _ => break,
        }
    }
    let hj = restriction.jacobian(&theta);
    if rank(&hj, 1e-10) < r {
        return Err(Error::Rank(format!("restriction Jacobian has rank below {r} at the solution")));
    }
    Ok(FitResult {
        gradient_norm: max_abs(&f.rows(0, p).into_owned()),
        theta: theta_init.with_values(theta),
        loglik: l,
        lambda: Some(lambda),
        converged: true,
        iterations,
        warnings: Vec::new(),
    })
}

/// The pair of fits every classical test draws on.
#[derive(Debug, Clone)]
pub struct Fits {
    pub unrestricted: FitResult,
    pub restricted: FitResult,
}

impl Fits {
    /// Fit both models from the same starting point.
    pub fn compute<M: LikelihoodModel + ?Sized>(
        model: &M,
        data: &Dataset,
        restriction: &Restriction,
        theta_init: &ParamVector,
        opts: FitOptions,
    ) -> Result<Self> {
        Ok(Fits {
            unrestricted: fit_unrestricted(model, data, theta_init, opts)?,
            restricted: fit_restricted(model, data, restriction, theta_init, opts)?,
        })
    }
}
