//! Exact identities checked on deterministic fixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scoretest::estimator::{initial_point, FitOptions, Fits, Restriction};
use scoretest::likelihood::{Dataset, InfoKind, LikelihoodModel};
use scoretest::models::{pearson_statistic, BernoulliModel, MultinomialModel, NormalModel};
use scoretest::montecarlo::replication_rng;
use scoretest::robust::{rs_psi_stat, rs_star_d_blocks, rs_star_dp_stat, rs_star_p_stat, Partition};
use scoretest::trinity::{lm_form_test, rao_score_test};
use scoretest::{SarFixture, SpatialWeights};

use crate::report::Check;

const SEED: u64 = 20_240_601;
const TOL: f64 = 1e-10;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn check(name: &str, residual: f64) -> Check {
    Check { name: name.into(), residual, tolerance: TOL, pass: residual <= TOL }
}

fn rs_and_lm(model: &dyn LikelihoodModel, data: &Dataset, restriction: &Restriction) -> scoretest::Result<(f64, f64)> {
    let fits = Fits::compute(model, data, restriction, &initial_point(model, data)?, FitOptions::default())?;
    let rs = rao_score_test(model, data, restriction, &fits.restricted, InfoKind::Expected)?.statistic;
    let lm = lm_form_test(model, data, restriction, &fits.restricted, InfoKind::Expected)?.statistic;
    Ok((rs, lm))
}

fn pearson(rng: &mut ChaCha8Rng) -> scoretest::Result<Vec<Check>> {
    let anchor = {
        let m = MultinomialModel::new(4)?;
        let data = MultinomialModel::dataset_from_counts(&[10, 20, 30, 40])?;
        let (rs, _) = rs_and_lm(&m, &data, &Restriction::subset(vec![0, 1, 2], vec![0.25; 3])?)?;
        rel(rs, 20.0)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let k = rng.random_range(3..=8);
        let counts: Vec<u64> = (0..k).map(|_| rng.random_range(5..80)).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
        let total: f64 = raw.iter().sum();
        let p0: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let m = MultinomialModel::new(k)?;
        let data = MultinomialModel::dataset_from_counts(&counts)?;
        let (rs, _) = rs_and_lm(&m, &data, &Restriction::subset((0..k - 1).collect(), p0[..k - 1].to_vec())?)?;
        let c: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        worst = worst.max(rel(rs, pearson_statistic(&c, &p0)?));
    }
    Ok(vec![check("pearson = rs, (10,20,30,40) vs uniform is 20", anchor), check("pearson = rs, random fixtures", worst)])
}

fn lm_equals_rs(rng: &mut ChaCha8Rng) -> scoretest::Result<Check> {
    let y: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..3.0)).collect();
    let normal = Dataset::from_y(y.clone())?;
    let bits = Dataset::from_y(y.iter().map(|v| f64::from(*v > 0.5)).collect())?;
    let multi = MultinomialModel::dataset_from_counts(&[12, 30, 18])?;
    let cases: Vec<(Box<dyn LikelihoodModel>, Dataset, Restriction)> = vec![
        (Box::new(NormalModel::new()), normal.clone(), Restriction::subset(vec![0], vec![0.7])?),
        (Box::new(NormalModel::new()), normal.clone(), Restriction::subset(vec![1], vec![1.2])?),
        (Box::new(NormalModel::mean_only(1.5)?), normal, Restriction::subset(vec![0], vec![0.7])?),
        (Box::new(BernoulliModel::new()), bits, Restriction::subset(vec![0], vec![0.5])?),
        (Box::new(MultinomialModel::new(3)?), multi, Restriction::subset(vec![0, 1], vec![0.3, 0.4])?),
    ];
    let mut worst: f64 = 0.0;
    for (m, d, r) in &cases {
        let (rs, lm) = rs_and_lm(m.as_ref(), d, r)?;
        worst = worst.max(rel(rs, lm));
    }
    Ok(check("lm = rs across models", worst))
}

fn spatial(rng: &mut ChaCha8Rng) -> scoretest::Result<Check> {
    let w = SpatialWeights::rook_lattice(6, 6)?.row_standardize();
    let n = w.n();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let y = DVector::from_fn(n, |i, _| 1.0 + x[(i, 1)] + rng.random_range(-1.0..1.0));
        let f = SarFixture::new(&y, &x, &w)?;
        worst = worst.max(f.decomposition_residual()? / f.rs_joint()?.statistic.max(1.0));
    }
    Ok(check("spatial joint = psi + phi* = phi + psi*", worst))
}

fn spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * 0.5
}

fn robust(rng: &mut ChaCha8Rng) -> scoretest::Result<Vec<Check>> {
    let (mut to_p, mut to_d, mut to_rs): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let (j, k) = (spd(6, rng), spd(6, rng));
        let s = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
        let part = Partition { gamma: vec![0, 1], psi: vec![2, 3], phi: vec![4, 5] };
        let nophi = part.without_phi();
        to_p = to_p.max(rel(rs_star_dp_stat(&s, &j, &j, &part)?, rs_star_p_stat(&s, &j, &part)?));
        to_d = to_d.max(rel(rs_star_dp_stat(&s, &j, &k, &nophi)?, rs_star_d_blocks(&s, &j, &k, &nophi)?));
        to_rs = to_rs.max(rel(rs_star_dp_stat(&s, &j, &j, &nophi)?, rs_psi_stat(&s, &j, &nophi)?));
    }
    Ok(vec![
        check("doubly robust with K = J is the parametric-robust form", to_p),
        check("doubly robust without phi is the distribution-robust form", to_d),
        check("doubly robust with both is the classical score test", to_rs),
    ])
}

pub fn run() -> scoretest::Result<Vec<Check>> {
    let mut rng = replication_rng(SEED, 0);
    let mut checks = pearson(&mut rng)?;
    checks.push(lm_equals_rs(&mut rng)?);
    checks.push(spatial(&mut rng)?);
    checks.extend(robust(&mut rng)?);
    Ok(checks)
}
