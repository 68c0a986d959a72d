//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Every inversion of an information-type matrix goes through [`SpdFactor`],
//! which refuses matrices whose spectral condition number exceeds
//! [`COND_LIMIT`] instead of falling back to a pseudo-inverse.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition-number ceiling above which a matrix is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// Replace `a` by `(a + a') / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn symmetrized(mut a: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut a);
    a
}

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
///
/// Returns `f64::INFINITY` for an exactly singular matrix and 1 for an empty one.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(a.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// Cholesky factor of a symmetric positive-definite matrix with condition monitoring.
pub struct SpdFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    dim: usize,
    pub cond: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim(format!("{what}: {}x{} is not square", a.nrows(), a.ncols())));
        }
        let dim = a.nrows();
        if dim == 0 {
            return Ok(SpdFactor { chol: None, dim, cond: 1.0 });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{what}: non-finite entry")));
        }
        let cond = condition_number(a);
        if !(cond <= COND_LIMIT) {
            return Err(Error::SingularInfo(format!("{what}: condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")));
        }
        let chol = Cholesky::new(symmetrized(a.clone()))
            .ok_or_else(|| Error::SingularInfo(format!("{what}: not positive definite")))?;
        Ok(SpdFactor { chol: Some(chol), dim, cond })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => DVector::zeros(0),
        }
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => DMatrix::zeros(0, b.ncols()),
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => symmetrized(c.inverse()),
            None => DMatrix::zeros(0, 0),
        }
    }

    /// `v' A^{-1} v`.
    pub fn quad_inv(&self, v: &DVector<f64>) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        v.dot(&self.solve_vec(v))
    }
}

/// `v' A^{-1} v` for symmetric positive-definite `a`.
pub fn quad_form_inv(a: &DMatrix<f64>, v: &DVector<f64>, what: &str) -> Result<f64> {
    if a.nrows() != v.len() {
        return Err(Error::dim(format!("{what}: matrix is {}x{}, vector has length {}", a.nrows(), a.ncols(), v.len())));
    }
    Ok(SpdFactor::new(a, what)?.quad_inv(v))
}

pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(SpdFactor::new(a, what)?.inverse())
}

pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Numerical rank from singular values, relative tolerance `rtol`.
pub fn rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * top).count()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Least-squares coefficients of `y` on the columns of `x` (QR based).
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::dim("least squares: row counts differ"));
    }
    if rank(x, 1e-10) < x.ncols() {
        return Err(Error::Rank(format!("design matrix with {} columns is rank deficient", x.ncols())));
    }
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Rank("triangular solve failed".into()))
}
