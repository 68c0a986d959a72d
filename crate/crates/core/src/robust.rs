//! Sandwich machinery and score tests robust to distributional (D),
//! local parametric (P) and joint (DP) misspecification.
//!
//! Parameters are split into nuisance `gamma`, tested `psi` and possibly
//! misspecified `phi` blocks. Throughout, `K` is the negative Hessian (used
//! for projections) and `J` the outer product of scores (used for variances);
//! under correct specification `J = K` and every robust statistic reduces to
//! its classical counterpart. All blocks are evaluated at the restricted
//! estimate `theta~ = (gamma~', 0', 0')'`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{FitResult, Restriction};
use crate::likelihood::{information_at, observed_at, opg_at, score_at, Block, Dataset, InfoKind, LikelihoodModel, ParamVector};
use crate::linalg::{condition_number, rank, submatrix, subvector, symmetrized, SpdFactor};
use crate::result::{TestResult, Variant};

/// Coordinate indices of the gamma, psi and phi blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub gamma: Vec<usize>,
    pub psi: Vec<usize>,
    pub phi: Vec<usize>,
}

impl Partition {
    pub fn from_labels(labels: &[Block]) -> Self {
        let pick = |b| labels.iter().enumerate().filter(|(_, &l)| l == b).map(|(i, _)| i).collect();
        Partition { gamma: pick(Block::Gamma), psi: pick(Block::Psi), phi: pick(Block::Phi) }
    }

    pub fn of(theta: &ParamVector) -> Self {
        Self::from_labels(theta.labels())
    }

    /// `(m, r, q)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.gamma.len(), self.psi.len(), self.phi.len())
    }

    /// The same split with the phi block removed.
    pub fn without_phi(&self) -> Self {
        Partition { gamma: self.gamma.clone(), psi: self.psi.clone(), phi: Vec::new() }
    }

    fn require_psi(&self) -> Result<()> {
        if self.psi.is_empty() {
            Err(Error::domain("partition has no psi (tested) coordinates"))
        } else {
            Ok(())
        }
    }
}

/// Sub-block `M_ab`.
pub fn block(m: &DMatrix<f64>, a: &[usize], b: &[usize]) -> DMatrix<f64> {
    submatrix(m, a, b)
}

/// Reassemble a matrix from its gamma/psi/phi blocks (inverse of [`block`]).
pub fn reassemble(blocks: &[(&[usize], &[usize], DMatrix<f64>)], p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for (rows, cols, m) in blocks {
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(r, c)] = m[(i, j)];
            }
        }
    }
    out
}

/// Dotted block `M_ab.c = M_ab - M_ac M_c^-1 M_cb` (factorized solve).
pub fn dotted(m: &DMatrix<f64>, a: &[usize], b: &[usize], c: &[usize]) -> Result<DMatrix<f64>> {
    let mut out = submatrix(m, a, b);
    if !c.is_empty() {
        let f = SpdFactor::new(&submatrix(m, c, c), "conditioning block")?;
        out -= submatrix(m, a, c) * f.solve_mat(&submatrix(m, c, b));
    }
    Ok(out)
}

/// `A_ac A_c^-1` as an `|a| x |c|` matrix.
fn projector(a_mat: &DMatrix<f64>, a: &[usize], c: &[usize]) -> Result<DMatrix<f64>> {
    if c.is_empty() {
        return Ok(DMatrix::zeros(a.len(), 0));
    }
    let f = SpdFactor::new(&submatrix(a_mat, c, c), "conditioning block of K")?;
    Ok(f.solve_mat(&submatrix(a_mat, c, a)).transpose())
}

/// Sandwich dotted block
/// `B_ab.c = J_ab - K_ac K_c^-1 J_cb - J_ac K_c^-1 K_cb + K_ac K_c^-1 J_c K_c^-1 K_cb`:
/// the covariance of the `a` and `b` scores after each is projected off `c` using `K`.
pub fn b_dotted(j: &DMatrix<f64>, k: &DMatrix<f64>, a: &[usize], b: &[usize], c: &[usize]) -> Result<DMatrix<f64>> {
    let pa = projector(k, a, c)?;
    let pb = projector(k, b, c)?;
    let j_cb = submatrix(j, c, b);
    let j_ac = submatrix(j, a, c);
    let j_cc = submatrix(j, c, c);
    Ok(submatrix(j, a, b) - &pa * j_cb - j_ac * pb.transpose() + &pa * j_cc * pb.transpose())
}

/// `S_a - K_ac K_c^-1 S_c`.
fn net_score(s: &DVector<f64>, k: &DMatrix<f64>, a: &[usize], c: &[usize]) -> Result<DVector<f64>> {
    let mut out = subvector(s, a);
    if !c.is_empty() {
        out -= projector(k, a, c)? * subvector(s, c);
    }
    Ok(out)
}

/// `J = sum_i s_i s_i'` and `K = -Hessian` at `theta~`.
pub fn compute_jk<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta: &ParamVector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = theta.values();
    Ok((opg_at(model, data, t)?, observed_at(model, data, t)?))
}

/// `B = K^-1 J K^-1`.
pub fn sandwich_b(j: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if j.shape() != k.shape() {
        return Err(Error::dim("J and K differ in shape"));
    }
    let f = SpdFactor::new(k, "K")?;
    let kij = f.solve_mat(j);
    Ok(symmetrized(f.solve_mat(&kij.transpose())))
}

/// Size of the information-matrix-equality violation `J - K`.
#[derive(Debug, Clone)]
pub struct ImReport {
    /// `||J - K||_F / ||K||_F`.
    pub relative: f64,
    /// `|J_ij - K_ij| / sqrt(|K_ii K_jj|)`.
    pub entries: DMatrix<f64>,
}

impl ImReport {
    /// Largest entry discrepancy within the block `rows x cols`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> f64 {
        submatrix(&self.entries, rows, cols).iter().fold(0.0, |m: f64, &v| m.max(v))
    }
}

pub fn im_equality_check(j: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<ImReport> {
    if j.shape() != k.shape() {
        return Err(Error::dim("J and K differ in shape"));
    }
    let diff = j - k;
    let kn = k.norm();
    let relative = if kn > 0.0 { diff.norm() / kn } else if diff.norm() == 0.0 { 0.0 } else { f64::INFINITY };
    let entries = DMatrix::from_fn(k.nrows(), k.ncols(), |a, b| {
        let scale = (k[(a, a)] * k[(b, b)]).abs().sqrt();
        if scale > 0.0 {
            diff[(a, b)].abs() / scale
        } else if diff[(a, b)] == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    });
    Ok(ImReport { relative, entries })
}

fn robust_diagnostics(result: TestResult, j: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<TestResult> {
    let im = im_equality_check(j, k)?;
    Ok(result
        .with_diagnostic("J_cond", condition_number(j))
        .with_diagnostic("K_cond", condition_number(k))
        .with_diagnostic("im_discrepancy", im.relative))
}

/// `q' (H B H')^-1 q` with `q = H K^-1 S`.
pub fn rs_star_d_general(s: &DVector<f64>, j: &DMatrix<f64>, k: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    let kf = SpdFactor::new(k, "K")?;
    let q = h * kf.solve_vec(s);
    let b = sandwich_b(j, k)?;
    let cov = h * b * h.transpose();
    Ok(SpdFactor::new(&cov, "H B H'")?.quad_inv(&q))
}

/// Block form of the distribution-robust score statistic for `psi` given `gamma`:
/// `S_psi.' B_psi.gamma^-1 S_psi.` with `S_psi. = S_psi - K_psi,gamma K_gamma^-1 S_gamma`.
pub fn rs_star_d_blocks(s: &DVector<f64>, j: &DMatrix<f64>, k: &DMatrix<f64>, part: &Partition) -> Result<f64> {
    part.require_psi()?;
    let net = net_score(s, k, &part.psi, &part.gamma)?;
    let var = b_dotted(j, k, &part.psi, &part.psi, &part.gamma)?;
    Ok(SpdFactor::new(&var, "B_psi.gamma")?.quad_inv(&net))
}

/// `S_psi' I_psi.gamma^-1 S_psi`.
///
/// Scores are taken net of the nuisance direction, `S_psi - I_psi,gamma I_gamma^-1 S_gamma`,
/// which is a no-op at the restricted estimate where `S_gamma = 0`.
pub fn rs_psi_stat(s: &DVector<f64>, info: &DMatrix<f64>, part: &Partition) -> Result<f64> {
    part.require_psi()?;
    let var = dotted(info, &part.psi, &part.psi, &part.gamma)?;
    let net = net_score(s, info, &part.psi, &part.gamma)?;
    Ok(SpdFactor::new(&var, "I_psi.gamma")?.quad_inv(&net))
}

/// Parametric-robust statistic: net score `S_psi - I_psi,phi.gamma I_phi.gamma^-1 S_phi`
/// with variance `I_psi.gamma - I_psi,phi.gamma I_phi.gamma^-1 I_phi,psi.gamma`.
pub fn rs_star_p_stat(s: &DVector<f64>, info: &DMatrix<f64>, part: &Partition) -> Result<f64> {
    part.require_psi()?;
    if part.phi.is_empty() {
        return rs_psi_stat(s, info, part);
    }
    let (g, ps, ph) = (&part.gamma, &part.psi, &part.phi);
    let i_psi = dotted(info, ps, ps, g)?;
    let i_psiphi = dotted(info, ps, ph, g)?;
    let f_phi = SpdFactor::new(&dotted(info, ph, ph, g)?, "I_phi.gamma")?;
    let c = f_phi.solve_mat(&i_psiphi.transpose()).transpose();
    let net = net_score(s, info, ps, g)? - &c * net_score(s, info, ph, g)?;
    let var = i_psi - &c * i_psiphi.transpose();
    Ok(SpdFactor::new(&var, "adjusted I_psi.gamma")?.quad_inv(&net))
}

/// Jointly robust statistic: net score `S_psi. - C S_phi.` with
/// `C = K_psi,phi.gamma K_phi.gamma^-1` and variance
/// `B_psi.gamma - C B_phi,psi.gamma - B_psi,phi.gamma C' + C B_phi.gamma C'`.
pub fn rs_star_dp_stat(s: &DVector<f64>, j: &DMatrix<f64>, k: &DMatrix<f64>, part: &Partition) -> Result<f64> {
    part.require_psi()?;
    let (g, ps, ph) = (&part.gamma, &part.psi, &part.phi);
    if ph.is_empty() {
        return rs_star_d_blocks(s, j, k, part);
    }
    let k_psiphi = dotted(k, ps, ph, g)?;
    let f_phi = SpdFactor::new(&dotted(k, ph, ph, g)?, "K_phi.gamma")?;
    let c = f_phi.solve_mat(&k_psiphi.transpose()).transpose();
    let net = net_score(s, k, ps, g)? - &c * net_score(s, k, ph, g)?;
    let b_psi = b_dotted(j, k, ps, ps, g)?;
    let b_phi = b_dotted(j, k, ph, ph, g)?;
    let b_psiphi = b_dotted(j, k, ps, ph, g)?;
    let b_phipsi = b_dotted(j, k, ph, ps, g)?;
    let var = b_psi - &c * b_phipsi - b_psiphi * c.transpose() + &c * b_phi * c.transpose();
    Ok(SpdFactor::new(&symmetrized(var), "DP variance")?.quad_inv(&net))
}

/// `delta' I_phi,psi.gamma I_psi.gamma^-1 I_psi,phi.gamma delta`.
pub fn noncentrality_stat(info: &DMatrix<f64>, part: &Partition, delta: &DVector<f64>) -> Result<f64> {
    part.require_psi()?;
    if delta.len() != part.phi.len() {
        return Err(Error::dim(format!("delta has length {}, phi block has {}", delta.len(), part.phi.len())));
    }
    if part.phi.is_empty() {
        return Ok(0.0);
    }
    let i_psiphi = dotted(info, &part.psi, &part.phi, &part.gamma)?;
    let v = &i_psiphi * delta;
    Ok(SpdFactor::new(&dotted(info, &part.psi, &part.psi, &part.gamma)?, "I_psi.gamma")?.quad_inv(&v).max(0.0))
}

/// Distribution-robust score test of `restriction` at the restricted estimate.
///
/// Subset restrictions use the block form with the fixed coordinates as
/// `psi`; general restrictions use the `H K^-1 S` form. Both agree for a
/// coordinate-selector `H`.
pub fn rs_star_d<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    restricted: &FitResult,
) -> Result<TestResult> {
    let t = restricted.theta.values();
    let s = score_at(model, data, t)?;
    let (j, k) = compute_jk(model, data, &restricted.theta)?;
    let stat = match restriction {
        Restriction::SubsetFix { indices, .. } => {
            let p = model.dim();
            let part = Partition { gamma: (0..p).filter(|i| !indices.contains(i)).collect(), psi: indices.clone(), phi: vec![] };
            rs_star_d_blocks(&s, &j, &k, &part)?
        }
        Restriction::General { .. } => {
            let h = restriction.jacobian(t);
            if rank(&h, 1e-10) < restriction.r() {
                return Err(Error::Rank("restriction Jacobian is rank deficient".into()));
            }
            rs_star_d_general(&s, &j, &k, &h)?
        }
    };
    robust_diagnostics(TestResult::chi2(Variant::RsStarD, stat, restriction.r())?, &j, &k)
}

/// Sandwich Wald statistic `(h - c)' [H B H']^-1 (h - c)` at the unrestricted estimate.
pub fn wald_star<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    restriction: &Restriction,
    unrestricted: &FitResult,
) -> Result<TestResult> {
    let t = unrestricted.theta.values();
    let (j, k) = compute_jk(model, data, &unrestricted.theta)?;
    let h = restriction.jacobian(t);
    if h.nrows() != restriction.r() || h.ncols() != model.dim() {
        return Err(Error::dim("restriction Jacobian has the wrong shape"));
    }
    if rank(&h, 1e-10) < restriction.r() {
        return Err(Error::Rank("restriction Jacobian is rank deficient".into()));
    }
    let b = sandwich_b(&j, &k)?;
    let cov = &h * b * h.transpose();
    let stat = SpdFactor::new(&cov, "H B H'")?.quad_inv(&restriction.discrepancy(t));
    robust_diagnostics(TestResult::chi2(Variant::WaldStar, stat, restriction.r())?, &j, &k)
}

/// Classical score test of `psi = 0` with `phi` assumed zero.
pub fn rs_psi<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta_tilde: &ParamVector, kind: InfoKind) -> Result<TestResult> {
    let part = Partition::of(theta_tilde);
    let t = theta_tilde.values();
    let info = information_at(model, data, t, kind)?;
    let stat = rs_psi_stat(&score_at(model, data, t)?, &info.matrix, &part)?;
    Ok(TestResult::chi2(Variant::RsPsi, stat, part.psi.len())?.with_info(info.used).with_notes(info.warnings))
}

/// Score test of `psi = 0` robust to local misspecification in `phi`.
pub fn rs_star_p<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta_tilde: &ParamVector, kind: InfoKind) -> Result<TestResult> {
    let part = Partition::of(theta_tilde);
    let t = theta_tilde.values();
    let info = information_at(model, data, t, kind)?;
    let stat = rs_star_p_stat(&score_at(model, data, t)?, &info.matrix, &part)?;
    let mut result = TestResult::chi2(Variant::RsStarP, stat, part.psi.len())?.with_info(info.used).with_notes(info.warnings);
    if part.phi.is_empty() {
        result = result.with_note("no phi block: statistic equals RS_psi");
    }
    Ok(result)
}

/// Score test of `psi = 0` robust to both distributional and local parametric misspecification.
pub fn rs_star_dp<M: LikelihoodModel + ?Sized>(model: &M, data: &Dataset, theta_tilde: &ParamVector) -> Result<TestResult> {
    let part = Partition::of(theta_tilde);
    let s = score_at(model, data, theta_tilde.values())?;
    let (j, k) = compute_jk(model, data, theta_tilde)?;
    let stat = rs_star_dp_stat(&s, &j, &k, &part)?;
    robust_diagnostics(TestResult::chi2(Variant::RsStarDp, stat, part.psi.len())?, &j, &k)
}

/// Noncentrality of `RS_psi` under a local `phi = delta / sqrt(n)` departure.
pub fn noncentrality<M: LikelihoodModel + ?Sized>(
    model: &M,
    data: &Dataset,
    theta_tilde: &ParamVector,
    delta: &DVector<f64>,
    kind: InfoKind,
) -> Result<f64> {
    let info = information_at(model, data, theta_tilde.values(), kind)?;
    noncentrality_stat(&info.matrix, &Partition::of(theta_tilde), delta)
}
