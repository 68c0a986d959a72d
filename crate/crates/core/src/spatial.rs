//! Mixed regressive spatial autoregressive model with autoregressive
//! disturbances and its score diagnostics.
//!
//! ```text
//! y = phi W y + X beta + u,    u = psi W u + e,    e ~ N(0, sigma2 I)
//! ```
//!
//! `psi` is the disturbance (error) dependence and `phi` the spatial lag.
//! All five statistics are computed from the OLS fit under `psi = phi = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LikelihoodModel, ParamVector};
use crate::models::{ols, OlsFit};
use crate::result::{TestResult, Variant};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Spatial weight matrix: nonnegative, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    w: DMatrix<f64>,
    row_standardized: bool,
}

impl SpatialWeights {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::dim(format!("W is {}x{}, must be square", w.nrows(), w.ncols())));
        }
        if w.nrows() == 0 {
            return Err(Error::domain("W is empty"));
        }
        if let Some((idx, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            let n = w.nrows();
            return Err(Error::domain(format!("W[{}, {}] = {v} must be finite and nonnegative", idx % n, idx / n)));
        }
        if let Some(i) = (0..w.nrows()).find(|&i| w[(i, i)] != 0.0) {
            return Err(Error::domain(format!("W has nonzero diagonal at {i}")));
        }
        let row_standardized = is_row_standardized(&w);
        Ok(SpatialWeights { w, row_standardized })
    }

    /// Build from `(i, j, weight)` triplets (0-based); repeated pairs are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::domain(format!("weight ({i}, {j}) outside an {n}x{n} matrix")));
            }
            w[(i, j)] += v;
        }
        Self::new(w)
    }

    /// Rook-contiguity weights on a `rows x cols` grid (unstandardized 0/1).
    pub fn rook_lattice(rows: usize, cols: usize) -> Result<Self> {
        let n = rows * cols;
        let mut w = DMatrix::zeros(n, n);
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if r + 1 < rows {
                    w[(i, i + cols)] = 1.0;
                    w[(i + cols, i)] = 1.0;
                }
                if c + 1 < cols {
                    w[(i, i + 1)] = 1.0;
                    w[(i + 1, i)] = 1.0;
                }
            }
        }
        Self::new(w)
    }

    /// Each node linked to its two neighbours on a ring.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain("a cycle needs at least three nodes"));
        }
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            w[(i, (i + 1) % n)] = 1.0;
            w[(i, (i + n - 1) % n)] = 1.0;
        }
        Self::new(w)
    }

    /// Divide every nonzero row by its sum.
    pub fn row_standardize(&self) -> Self {
        let mut w = self.w.clone();
        for mut row in w.row_iter_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        SpatialWeights { w, row_standardized: true }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_row_standardized(&self) -> bool {
        self.row_standardized
    }

    /// Simultaneous relabeling of the observations.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(Error::dim("permutation length differs from n"));
        }
        Self::new(DMatrix::from_fn(self.n(), self.n(), |i, j| self.w[(order[i], order[j])]))
    }
}

fn is_row_standardized(w: &DMatrix<f64>) -> bool {
    w.row_iter().all(|r| {
        let s: f64 = r.sum();
        s == 0.0 || (s - 1.0).abs() <= 1e-10
    })
}

/// Quantities shared by the five statistics, computed once from `(y, X, W)`.
#[derive(Debug, Clone)]
pub struct SarFixture {
    pub fit: OlsFit,
    /// `T = tr[(W' + W) W]`.
    pub t: f64,
    /// `u~' W u~ / sigma~2`: disturbance-direction score.
    pub score_psi: f64,
    /// `u~' W y / sigma~2`: lag-direction score.
    pub score_phi: f64,
    /// `[(W X gamma~)' M (W X gamma~) + T sigma~2] / sigma~2`.
    pub info_phi: f64,
    pub n: usize,
}

impl SarFixture {
    pub fn new(y: &DVector<f64>, x: &DMatrix<f64>, w: &SpatialWeights) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || w.n() != n {
            return Err(Error::dim(format!("y has {n} rows, X has {}, W is {}x{}", x.nrows(), w.n(), w.n())));
        }
        let wm = w.matrix();
        let fit = ols(y, x)?;
        if !(fit.sigma2 > 0.0) {
            return Err(Error::DegenerateSample("OLS residuals are identically zero".into()));
        }
        let t = (wm.transpose() + wm).component_mul(&wm.transpose()).sum();
        if !(t > 0.0) {
            return Err(Error::domain("T = tr[(W' + W) W] must be positive; W has no links"));
        }
        let u = &fit.residuals;
        let s2 = fit.sigma2;
        let wu = wm * u;
        let wy = wm * y;
        let wxb = wm * (x * &fit.beta);
        // M (W X gamma~) is the residual of regressing W X gamma~ on X.
        let m_wxb = ols(&wxb, x)?.residuals;
        Ok(SarFixture {
            t,
            score_psi: u.dot(&wu) / s2,
            score_phi: u.dot(&wy) / s2,
            info_phi: (m_wxb.norm_squared() + t * s2) / s2,
            n,
            fit,
        })
    }

    fn adjusted_gap(&self) -> Result<f64> {
        let gap = self.info_phi - self.t;
        if !(gap > 1e-12 * self.info_phi.abs().max(1.0)) {
            return Err(Error::DegenerateAdjustment(format!(
                "I_phi.gamma = {:.6e} does not exceed T = {:.6e}; robust denominators lose positivity",
                self.info_phi, self.t
            )));
        }
        Ok(gap)
    }

    /// `(u~'W u~ / sigma~2)^2 / T`.
    pub fn rs_psi(&self) -> Result<TestResult> {
        TestResult::chi2(Variant::SpatialPsi, self.score_psi.powi(2) / self.t, 1)
    }

    /// Error-dependence test robust to a local spatial lag.
    pub fn rs_star_psi(&self) -> Result<TestResult> {
        self.adjusted_gap()?;
        let num = self.score_psi - self.t / self.info_phi * self.score_phi;
        let den = self.t * (1.0 - self.t / self.info_phi);
        TestResult::chi2(Variant::SpatialPsiStar, num * num / den, 1)
    }

    /// `(u~'W y / sigma~2)^2 / I_phi.gamma`.
    pub fn rs_phi(&self) -> Result<TestResult> {
        TestResult::chi2(Variant::SpatialPhi, self.score_phi.powi(2) / self.info_phi, 1)
    }

    /// Spatial-lag test robust to local error dependence.
    pub fn rs_star_phi(&self) -> Result<TestResult> {
        let gap = self.adjusted_gap()?;
        TestResult::chi2(Variant::SpatialPhiStar, (self.score_phi - self.score_psi).powi(2) / gap, 1)
    }

    /// Joint test of `psi = phi = 0` on 2 degrees of freedom.
    pub fn rs_joint(&self) -> Result<TestResult> {
        let gap = self.adjusted_gap()?;
        let stat = self.score_psi.powi(2) / self.t + (self.score_phi - self.score_psi).powi(2) / gap;
        TestResult::chi2(Variant::SpatialJoint, stat, 2)
    }

    /// Largest violation of `joint = RS_psi + RS*_phi = RS_phi + RS*_psi`.
    pub fn decomposition_residual(&self) -> Result<f64> {
        let joint = self.rs_joint()?.statistic;
        let a = self.rs_psi()?.statistic + self.rs_star_phi()?.statistic;
        let b = self.rs_phi()?.statistic + self.rs_star_psi()?.statistic;
        Ok((joint - a).abs().max((joint - b).abs()))
    }

    /// All five statistics, with the decomposition residual attached to the joint test.
    pub fn all(&self) -> Result<Vec<TestResult>> {
        let resid = self.decomposition_residual()?;
        Ok(vec![
            self.rs_psi()?,
            self.rs_star_psi()?,
            self.rs_phi()?,
            self.rs_star_phi()?,
            self.rs_joint()?.with_diagnostic("decomposition_residual", resid),
        ])
    }

    /// `(gamma~, sigma~2, 0, 0)` labelled for the generic engine with `psi` as the tested block.
    pub fn null_parameters(&self) -> ParamVector {
        let mut gamma: Vec<f64> = self.fit.beta.iter().copied().collect();
        gamma.push(self.fit.sigma2);
        ParamVector::from_blocks(&gamma, &[0.0], &[0.0])
    }

    /// Statistic selected by CLI name.
    pub fn by_name(&self, name: &str) -> Result<TestResult> {
        match name {
            "psi" => self.rs_psi(),
            "psi-star" => self.rs_star_psi(),
            "phi" => self.rs_phi(),
            "phi-star" => self.rs_star_phi(),
            "joint" => self.rs_joint(),
            other => Err(Error::UnknownName(format!("spatial statistic '{other}'"))),
        }
    }
}

/// Full SAR likelihood with parameters `(beta', sigma2, psi, phi)`; data column `y`.
///
/// Used to check the closed forms against the generic score machinery.
#[derive(Debug, Clone)]
pub struct SarModel {
    x: DMatrix<f64>,
    w: DMatrix<f64>,
}

struct SarPieces {
    eps: DVector<f64>,
    /// `B X`, `W u`, `B W y` (score directions for beta, psi, phi).
    bx: DMatrix<f64>,
    wu: DVector<f64>,
    bwy: DVector<f64>,
}

impl SarModel {
    pub fn new(x: DMatrix<f64>, w: &SpatialWeights) -> Result<Self> {
        if x.nrows() != w.n() {
            return Err(Error::dim(format!("X has {} rows, W is {}x{}", x.nrows(), w.n(), w.n())));
        }
        Ok(SarModel { x, w: w.matrix().clone() })
    }

    fn k(&self) -> usize {
        self.x.ncols()
    }

    fn split(&self, theta: &DVector<f64>) -> (DVector<f64>, f64, f64, f64) {
        let k = self.k();
        (theta.rows(0, k).into_owned(), theta[k], theta[k + 1], theta[k + 2])
    }

    fn shifted(&self, rho: f64) -> DMatrix<f64> {
        DMatrix::identity(self.w.nrows(), self.w.ncols()) - &self.w * rho
    }

    fn pieces(&self, y: &DVector<f64>, theta: &DVector<f64>) -> SarPieces {
        let (beta, _, psi, phi) = self.split(theta);
        let a = self.shifted(phi);
        let b = self.shifted(psi);
        let u = &a * y - &self.x * beta;
        let wy = &self.w * y;
        SarPieces { eps: &b * &u, bx: &b * &self.x, wu: &self.w * &u, bwy: &b * wy }
    }

    /// `ln |I - rho W|`, `None` when the determinant is not positive.
    fn log_det(&self, rho: f64) -> Option<f64> {
        if rho == 0.0 {
            return Some(0.0);
        }
        let lu = self.shifted(rho).lu();
        let u = lu.u();
        let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let mut acc = 0.0;
        for d in u.diagonal().iter() {
            if *d == 0.0 {
                return None;
            }
            if *d < 0.0 {
                sign = -sign;
            }
            acc += d.abs().ln();
        }
        (sign > 0.0).then_some(acc)
    }

    /// `tr[(I - rho W)^-1 W]`.
    fn trace_term(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return self.w.trace();
        }
        self.shifted(rho).lu().solve(&self.w).map_or(f64::NAN, |m| m.trace())
    }

    fn y(data: &Dataset) -> DVector<f64> {
        DVector::from_column_slice(data.column("y").expect("validated"))
    }
}

impl LikelihoodModel for SarModel {
    fn name(&self) -> String {
        "sar".into()
    }

    fn dim(&self) -> usize {
        self.k() + 3
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.k()).map(|j| format!("beta{j}")).collect();
        v.extend(["sigma2".into(), "psi".into(), "phi".into()]);
        v
    }

    fn validate_data(&self, data: &Dataset) -> Result<()> {
        data.column("y")?;
        if data.n() != self.x.nrows() {
            return Err(Error::dim(format!("dataset has {} rows, X has {}", data.n(), self.x.nrows())));
        }
        Ok(())
    }

    fn check_domain(&self, theta: &DVector<f64>) -> Result<()> {
        let (_, s2, psi, phi) = self.split(theta);
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::domain(format!("sigma2 = {s2} must be positive")));
        }
        for (name, rho) in [("psi", psi), ("phi", phi)] {
            if !rho.is_finite() || self.log_det(rho).is_none() {
                return Err(Error::domain(format!("I - {name} W is not positive-determinant at {name} = {rho}")));
            }
        }
        Ok(())
    }

    fn log_density(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> f64 {
        let (_, s2, psi, phi) = self.split(theta);
        let p = self.pieces(&Self::y(data), theta);
        let dets = self.log_det(phi).unwrap_or(f64::NAN) + self.log_det(psi).unwrap_or(f64::NAN);
        -0.5 * (LN_2PI + s2.ln()) + dets / data.n() as f64 - p.eps[i] * p.eps[i] / (2.0 * s2)
    }

    fn log_likelihood_sum(&self, data: &Dataset, theta: &DVector<f64>) -> f64 {
        let (_, s2, psi, phi) = self.split(theta);
        let p = self.pieces(&Self::y(data), theta);
        let n = data.n() as f64;
        let dets = self.log_det(phi).unwrap_or(f64::NAN) + self.log_det(psi).unwrap_or(f64::NAN);
        -0.5 * n * (LN_2PI + s2.ln()) + dets - p.eps.norm_squared() / (2.0 * s2)
    }

    fn obs_score(&self, data: &Dataset, i: usize, theta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.score_matrix(data, theta).row(i).transpose())
    }

    fn score_matrix(&self, data: &Dataset, theta: &DVector<f64>) -> DMatrix<f64> {
        let (_, s2, psi, phi) = self.split(theta);
        let k = self.k();
        let n = data.n();
        let p = self.pieces(&Self::y(data), theta);
        let tr_b = self.trace_term(psi) / n as f64;
        let tr_a = self.trace_term(phi) / n as f64;
        DMatrix::from_fn(n, k + 3, |i, j| {
            let e = p.eps[i];
            match j {
                j if j < k => e * p.bx[(i, j)] / s2,
                j if j == k => -0.5 / s2 + e * e / (2.0 * s2 * s2),
                j if j == k + 1 => e * p.wu[i] / s2 - tr_b,
                _ => e * p.bwy[i] / s2 - tr_a,
            }
        })
    }

    /// Analytic at `psi = phi = 0` only; elsewhere the observed information is used.
    fn expected_information(&self, _data: &Dataset, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (beta, s2, psi, phi) = self.split(theta);
        if psi != 0.0 || phi != 0.0 {
            return None;
        }
        let k = self.k();
        let n = self.x.nrows() as f64;
        let w = &self.w;
        let t = (w.transpose() + w).component_mul(&w.transpose()).sum();
        let trw = w.trace();
        let wxb = w * (&self.x * beta);
        let mut info = DMatrix::zeros(k + 3, k + 3);
        info.view_mut((0, 0), (k, k)).copy_from(&(self.x.transpose() * &self.x / s2));
        let xwxb = self.x.transpose() * &wxb / s2;
        info.view_mut((0, k + 2), (k, 1)).copy_from(&xwxb);
        info.view_mut((k + 2, 0), (1, k)).copy_from(&xwxb.transpose());
        info[(k, k)] = n / (2.0 * s2 * s2);
        info[(k, k + 1)] = trw / s2;
        info[(k + 1, k)] = trw / s2;
        info[(k, k + 2)] = trw / s2;
        info[(k + 2, k)] = trw / s2;
        info[(k + 1, k + 1)] = t;
        info[(k + 1, k + 2)] = t;
        info[(k + 2, k + 1)] = t;
        info[(k + 2, k + 2)] = wxb.norm_squared() / s2 + t;
        Some(info)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::finite_diff_check;

    fn four_cycle() -> (DVector<f64>, DMatrix<f64>, SpatialWeights) {
        let w = SpatialWeights::cycle(4).unwrap().row_standardize();
        let y = DVector::from_vec(vec![1.0, 2.5, 0.5, 3.0]);
        let x = DMatrix::from_element(4, 1, 1.0);
        (y, x, w)
    }

    #[test]
    fn four_cycle_matches_matrix_arithmetic() {
        let (y, x, w) = four_cycle();
        let f = SarFixture::new(&y, &x, &w).unwrap();
        // Brute force: u = y - ybar, sigma2 = u'u/n, T = tr(W'W + WW).
        let ybar = y.mean();
        let u = y.map(|v| v - ybar);
        let s2 = u.norm_squared() / 4.0;
        let wm = w.matrix();
        let t = (wm.transpose() * wm + wm * wm).trace();
        assert!((f.t - t).abs() < 1e-14);
        assert!((f.t - 4.0).abs() < 1e-14);
        let a = (u.transpose() * wm * &u)[(0, 0)] / s2;
        assert!((f.rs_psi().unwrap().statistic - a * a / t).abs() < 1e-12);
        // X = intercept: W X beta = ybar * 1 lies in col(X), so I_phi.gamma = T.
        assert!((f.info_phi - t).abs() < 1e-12);
        assert!(matches!(f.rs_star_psi(), Err(Error::DegenerateAdjustment(_))));
    }

    #[test]
    fn four_node_with_covariate_matches_oracle() {
        let w = SpatialWeights::cycle(4).unwrap().row_standardize();
        let y = DVector::from_vec(vec![1.0, 2.5, 0.5, 3.0]);
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0, 1.0, 0.5]);
        let f = SarFixture::new(&y, &x, &w).unwrap();
        // Oracle: explicit projector M and normal-equation OLS.
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let g = &xtx_inv * x.transpose() * &y;
        let m = DMatrix::identity(4, 4) - &x * &xtx_inv * x.transpose();
        let u = &m * &y;
        assert!((&m * &u - &u).amax() < 1e-12);
        let s2 = u.norm_squared() / 4.0;
        let wm = w.matrix();
        let t = (wm.transpose() * wm + wm * wm).trace();
        let wxg = wm * &x * g;
        let info = ((wxg.transpose() * &m * &wxg)[(0, 0)] + t * s2) / s2;
        let a = (u.transpose() * wm * &u)[(0, 0)] / s2;
        let b = (u.transpose() * wm * &y)[(0, 0)] / s2;
        let expect = [
            a * a / t,
            (a - t / info * b).powi(2) / (t * (1.0 - t / info)),
            b * b / info,
            (b - a).powi(2) / (info - t),
            a * a / t + (b - a).powi(2) / (info - t),
        ];
        let got = f.all().unwrap();
        for (r, e) in got.iter().zip(expect) {
            assert!((r.statistic - e).abs() < 1e-10 * e.max(1.0), "{:?} {} vs {e}", r.variant, r.statistic);
        }
        assert!(f.decomposition_residual().unwrap() < 1e-10);
    }

    #[test]
    fn zero_scores_give_zero() {
        let f = SarFixture {
            fit: ols(&DVector::from_vec(vec![1.0, 2.0, 0.0]), &DMatrix::from_element(3, 1, 1.0)).unwrap(),
            t: 2.0,
            score_psi: 0.0,
            score_phi: 0.0,
            info_phi: 5.0,
            n: 3,
        };
        for r in f.all().unwrap() {
            assert_eq!(r.statistic, 0.0);
        }
        let g = SarFixture { score_psi: 1.5, score_phi: 1.5, ..f.clone() };
        assert_eq!(g.rs_star_phi().unwrap().statistic, 0.0);
        // Net disturbance score vanishes when score_phi = score_psi * I / T.
        let h = SarFixture { score_psi: 1.0, score_phi: 2.5, ..f };
        assert!(h.rs_star_psi().unwrap().statistic.abs() < 1e-15);
    }

    #[test]
    fn weights_validation() {
        assert!(SpatialWeights::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
        assert!(SpatialWeights::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).is_err());
        let w = SpatialWeights::rook_lattice(3, 3).unwrap();
        assert!(!w.is_row_standardized());
        let ws = w.row_standardize();
        assert!(ws.is_row_standardized());
        for r in ws.matrix().row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sar_score_matches_differences() {
        let w = SpatialWeights::cycle(6).unwrap().row_standardize();
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 * 0.7 - 1.0 });
        let m = SarModel::new(x, &w).unwrap();
        let d = Dataset::from_y(vec![0.3, 1.2, -0.4, 2.0, 0.8, 1.5]).unwrap();
        let r = finite_diff_check(&m, &d, &ParamVector::new(vec![0.2, 0.5, 0.9, 0.3, -0.2])).unwrap();
        assert!(r.score_deviation < 1e-6, "{r:?}");
    }
}
