//! Monte Carlo size, power and null-quantile studies.
//!
//! Replication `i` draws from a ChaCha8 generator seeded with the master seed
//! and switched to stream `i`, so every replication owns a disjoint keystream
//! and results do not depend on how replications are scheduled. Results are
//! collected in replication order and reduced serially.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, ChiSquared, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::binomial_band;
use crate::error::{Error, Result};
use crate::estimator::{fit_restricted, initial_point, FitOptions, Restriction};
use crate::likelihood::{Dataset, InfoKind, ParamVector};
use crate::models::{jarque_bera, robust_skewness_test, CauchyModel, NormalModel};
use crate::result::{TestResult, Variant};
use crate::spatial::{SarFixture, SpatialWeights};
use crate::trinity::{one_sided_score_test, rao_score_test, Direction};

/// Environment variable overriding the worker count when none is given.
pub const WORKERS_ENV: &str = "SCORETEST_WORKERS";

/// Share of failed replications above which a run is not trusted.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Stream reserved for fixed design draws (regressors of the spatial generator).
pub const DESIGN_STREAM: u64 = u64::MAX;

/// Generator for replication `rep` under `master_seed`.
pub fn replication_rng(master_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep);
    rng
}

/// Explicit count, else [`WORKERS_ENV`], else the available parallelism.
pub fn resolve_workers(requested: Option<usize>) -> Result<usize> {
    if let Some(w) = requested {
        return if w == 0 { Err(Error::domain("worker count must be positive")) } else { Ok(w) };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::domain(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `f` inside a dedicated pool of the resolved size.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = resolve_workers(workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::domain(format!("cannot start {n} workers: {e}")))?;
    Ok(pool.install(f))
}

/// `name` or `name:key=value,key=value`.
fn parse_named(s: &str) -> Result<(String, BTreeMap<String, f64>)> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut params = BTreeMap::new();
    for kv in rest.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::UnknownName(format!("parameter '{kv}' in '{s}' (expected key=value)")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::domain(format!("parameter {k} = '{v}' is not a number")))?;
        params.insert(k.trim().to_string(), v);
    }
    Ok((name.trim().to_string(), params))
}

struct Params {
    source: String,
    map: BTreeMap<String, f64>,
}

impl Params {
    fn get(&mut self, key: &str, default: f64) -> f64 {
        self.map.remove(key).unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::UnknownName(format!("parameter '{k}' for '{}'", self.source))),
            None => Ok(()),
        }
    }
}

/// Error distribution of the spatial generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ErrorLaw {
    Normal,
    T { df: f64 },
}

/// Named data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Dgp {
    Normal { mean: f64, sd: f64 },
    T { df: f64, location: f64 },
    Cauchy { location: f64 },
    Bernoulli { p: f64 },
    Constant { value: f64 },
    /// Draws are chi-squared variates; pairs with the `identity` statistic.
    Chi2 { df: f64 },
    /// `y = (I - phi W)^-1 (X beta + (I - psi W)^-1 e)` on a rook lattice.
    Spatial { errors: ErrorLaw, psi: f64, phi: f64 },
}

impl FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, map) = parse_named(s)?;
        let mut p = Params { source: s.to_string(), map };
        let dgp = match name.as_str() {
            "normal" => Dgp::Normal { mean: p.get("mean", 0.0), sd: p.get("sd", 1.0) },
            "t" => Dgp::T { df: p.get("df", 5.0), location: p.get("location", 0.0) },
            "cauchy" => Dgp::Cauchy { location: p.get("location", 0.0) },
            "bernoulli" => Dgp::Bernoulli { p: p.get("p", 0.5) },
            "constant" => Dgp::Constant { value: p.get("value", 0.0) },
            "chi2" => Dgp::Chi2 { df: p.get("df", 1.0) },
            "spatial-normal" => Dgp::Spatial { errors: ErrorLaw::Normal, psi: p.get("psi", 0.0), phi: p.get("phi", 0.0) },
            "spatial-t" => {
                let df = p.get("df", 5.0);
                Dgp::Spatial { errors: ErrorLaw::T { df }, psi: p.get("psi", 0.0), phi: p.get("phi", 0.0) }
            }
            other => return Err(Error::UnknownName(format!("generator '{other}'"))),
        };
        p.finish()?;
        dgp.validate()?;
        Ok(dgp)
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dgp::Normal { mean, sd } => write!(f, "normal:mean={mean},sd={sd}"),
            Dgp::T { df, location } => write!(f, "t:df={df},location={location}"),
            Dgp::Cauchy { location } => write!(f, "cauchy:location={location}"),
            Dgp::Bernoulli { p } => write!(f, "bernoulli:p={p}"),
            Dgp::Constant { value } => write!(f, "constant:value={value}"),
            Dgp::Chi2 { df } => write!(f, "chi2:df={df}"),
            Dgp::Spatial { errors: ErrorLaw::Normal, psi, phi } => write!(f, "spatial-normal:psi={psi},phi={phi}"),
            Dgp::Spatial { errors: ErrorLaw::T { df }, psi, phi } => write!(f, "spatial-t:df={df},psi={psi},phi={phi}"),
        }
    }
}

impl Dgp {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dgp::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            Dgp::T { df, location } => df > 0.0 && location.is_finite(),
            Dgp::Cauchy { location } => location.is_finite(),
            Dgp::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Dgp::Constant { value } => value.is_finite(),
            Dgp::Chi2 { df } => df > 0.0,
            Dgp::Spatial { errors, psi, phi } => {
                psi.abs() < 1.0 && phi.abs() < 1.0 && !matches!(errors, ErrorLaw::T { df } if !(df > 0.0))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid generator parameters: {self}")))
        }
    }

    fn is_spatial(&self) -> bool {
        matches!(self, Dgp::Spatial { .. })
    }

    fn draw_iid(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Dgp::Normal { mean, sd } => (0..n).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect(),
            Dgp::T { df, location } => {
                let d = StudentT::new(df).expect("validated");
                (0..n).map(|_| location + d.sample(rng)).collect()
            }
            Dgp::Cauchy { location } => {
                let d = Cauchy::new(location, 1.0).expect("validated");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Dgp::Bernoulli { p } => (0..n).map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect(),
            Dgp::Constant { value } => vec![value; n],
            Dgp::Chi2 { df } => {
                let d = ChiSquared::new(df).expect("validated");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Dgp::Spatial { .. } => unreachable!("spatial draws go through SpatialSetup"),
        }
    }
}

/// Named statistic with its null value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Statistic {
    /// Score test of the normal mean with the variance as nuisance.
    RsNormalMean { theta0: f64 },
    /// One-sided (greater) score test of the Cauchy location.
    CauchyOneSided { theta0: f64 },
    Jb,
    SkewRobust,
    SpatialPsi,
    SpatialPsiStar,
    SpatialPhi,
    SpatialPhiStar,
    SpatialJoint,
    /// First draw referred to chi-squared with `df` degrees of freedom.
    Identity { df: usize },
    /// Always zero.
    Zero,
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, map) = parse_named(s)?;
        let mut p = Params { source: s.to_string(), map };
        let stat = match name.as_str() {
            "rs-normal-mean" => Statistic::RsNormalMean { theta0: p.get("theta0", 0.0) },
            "cauchy-one-sided" => Statistic::CauchyOneSided { theta0: p.get("theta0", 0.0) },
            "jb" => Statistic::Jb,
            "skew-robust" => Statistic::SkewRobust,
            "spatial-psi" => Statistic::SpatialPsi,
            "spatial-psi-star" => Statistic::SpatialPsiStar,
            "spatial-phi" => Statistic::SpatialPhi,
            "spatial-phi-star" => Statistic::SpatialPhiStar,
            "spatial-joint" => Statistic::SpatialJoint,
            "identity" => {
                let df = p.get("df", 1.0);
                if !(df >= 1.0 && df.fract() == 0.0) {
                    return Err(Error::domain(format!("identity df = {df} must be a positive integer")));
                }
                Statistic::Identity { df: df as usize }
            }
            "zero" => Statistic::Zero,
            other => return Err(Error::UnknownName(format!("statistic '{other}'"))),
        };
        p.finish()?;
        Ok(stat)
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::RsNormalMean { theta0 } => write!(f, "rs-normal-mean:theta0={theta0}"),
            Statistic::CauchyOneSided { theta0 } => write!(f, "cauchy-one-sided:theta0={theta0}"),
            Statistic::Jb => f.write_str("jb"),
            Statistic::SkewRobust => f.write_str("skew-robust"),
            Statistic::SpatialPsi => f.write_str("spatial-psi"),
            Statistic::SpatialPsiStar => f.write_str("spatial-psi-star"),
            Statistic::SpatialPhi => f.write_str("spatial-phi"),
            Statistic::SpatialPhiStar => f.write_str("spatial-phi-star"),
            Statistic::SpatialJoint => f.write_str("spatial-joint"),
            Statistic::Identity { df } => write!(f, "identity:df={df}"),
            Statistic::Zero => f.write_str("zero"),
        }
    }
}

impl Statistic {
    fn spatial_name(&self) -> Option<&'static str> {
        Some(match self {
            Statistic::SpatialPsi => "psi",
            Statistic::SpatialPsiStar => "psi-star",
            Statistic::SpatialPhi => "phi",
            Statistic::SpatialPhiStar => "phi-star",
            Statistic::SpatialJoint => "joint",
            _ => return None,
        })
    }

    fn evaluate_iid(&self, y: Vec<f64>) -> Result<TestResult> {
        match *self {
            Statistic::RsNormalMean { theta0 } => {
                let model = NormalModel::new();
                let data = Dataset::from_y(y)?;
                let restriction = Restriction::subset(vec![0], vec![theta0])?;
                let start = initial_point(&model, &data)?;
                let fit = fit_restricted(&model, &data, &restriction, &start, FitOptions::default())?;
                rao_score_test(&model, &data, &restriction, &fit, InfoKind::Expected)
            }
            Statistic::CauchyOneSided { theta0 } => {
                let data = Dataset::from_y(y)?;
                one_sided_score_test(&CauchyModel::new(), &data, &ParamVector::new(vec![theta0]), Direction::Greater, InfoKind::Expected)
            }
            Statistic::Jb => jarque_bera(&y),
            Statistic::SkewRobust => Ok(robust_skewness_test(&y)?.robust),
            Statistic::Identity { df } => TestResult::chi2(Variant::Rs, y[0], df),
            Statistic::Zero => TestResult::chi2(Variant::Rs, 0.0, 1),
            _ => unreachable!("spatial statistics go through SpatialSetup"),
        }
    }
}

/// Fixed lattice, regressors and filters of the spatial generator.
struct SpatialSetup {
    x: DMatrix<f64>,
    xb: DVector<f64>,
    w: SpatialWeights,
    lag_filter: Option<DMatrix<f64>>,
    error_filter: Option<DMatrix<f64>>,
    errors: ErrorLaw,
}

impl SpatialSetup {
    fn new(n: usize, errors: ErrorLaw, psi: f64, phi: f64, master_seed: u64) -> Result<Self> {
        let rows = (1..=n).filter(|r| n.is_multiple_of(*r) && r * r <= n).max().unwrap_or(1);
        let w = SpatialWeights::rook_lattice(rows, n / rows)?.row_standardize();
        let mut rng = replication_rng(master_seed, DESIGN_STREAM);
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
        let xb = &x * DVector::from_vec(vec![1.0, 1.0, -1.0]);
        let filter = |rho: f64| -> Result<Option<DMatrix<f64>>> {
            if rho == 0.0 {
                return Ok(None);
            }
            let a = DMatrix::identity(n, n) - w.matrix() * rho;
            a.try_inverse().map(Some).ok_or_else(|| Error::domain(format!("I - {rho} W is singular")))
        };
        Ok(SpatialSetup { lag_filter: filter(phi)?, error_filter: filter(psi)?, x, xb, w, errors })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let n = self.xb.len();
        let e = match self.errors {
            ErrorLaw::Normal => DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            ErrorLaw::T { df } => {
                let d = StudentT::new(df).expect("validated");
                DVector::from_fn(n, |_, _| d.sample(rng))
            }
        };
        let u = match &self.error_filter {
            Some(b) => b * e,
            None => e,
        };
        let y = &self.xb + u;
        match &self.lag_filter {
            Some(a) => a * y,
            None => y,
        }
    }

    fn evaluate(&self, stat: &Statistic, y: &DVector<f64>) -> Result<TestResult> {
        let name = stat.spatial_name().expect("checked at validation");
        SarFixture::new(y, &self.x, &self.w)?.by_name(name)
    }
}

/// One simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub dgp: Dgp,
    pub statistic: Statistic,
    pub n: usize,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub master_seed: u64,
}

impl McConfig {
    pub fn new(dgp: Dgp, statistic: Statistic, n: usize, reps: usize, alphas: Vec<f64>, master_seed: u64) -> Result<Self> {
        let c = McConfig { dgp, statistic, n, reps, alphas, master_seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 100 {
            return Err(Error::domain(format!("reps = {} must be at least 100", self.reps)));
        }
        if self.n == 0 {
            return Err(Error::domain("sample size must be positive"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::domain("alpha levels must be nonempty and lie in (0, 1)"));
        }
        self.dgp.validate()?;
        if self.dgp.is_spatial() != self.statistic.spatial_name().is_some() {
            return Err(Error::domain(format!(
                "statistic '{}' cannot be computed from generator '{}'",
                self.statistic, self.dgp
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub alpha: f64,
    pub rejections: usize,
    pub rate: f64,
    /// Exact binomial 99% acceptance band for the rate when the true size is `alpha`.
    pub band_lo: f64,
    pub band_hi: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub level: f64,
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub completed: usize,
    pub failures: usize,
    /// Failed replications by error kind.
    pub failure_kinds: BTreeMap<String, usize>,
    pub rates: Vec<RateRow>,
    /// Empirical 90/95/99% quantiles; `None` when too many replications failed.
    pub quantiles: Option<Vec<QuantileRow>>,
}

impl McReport {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.config.reps as f64
    }

    pub fn failure_check_passed(&self) -> bool {
        self.failure_rate() <= MAX_FAILURE_RATE
    }

    pub fn rate(&self, alpha: f64) -> Option<&RateRow> {
        self.rates.iter().find(|r| r.alpha == alpha)
    }
}

/// Empirical quantile `sorted[ceil(level R) - 1]` with the half-width of the
/// order-statistic interval at plus or minus one binomial standard deviation.
pub fn quantile_with_se(sorted: &[f64], level: f64) -> QuantileRow {
    let r = sorted.len();
    let at = |pos: f64| sorted[(pos.ceil().max(1.0) as usize).min(r) - 1];
    let centre = level * r as f64;
    let spread = (r as f64 * level * (1.0 - level)).sqrt();
    QuantileRow { level, value: at(centre), mc_se: 0.5 * (at(centre + spread) - at(centre - spread)) }
}

/// Levels reported by [`null_quantiles`].
pub const QUANTILE_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Run all replications; per-replication errors are tallied, never raised.
pub fn run_mc(config: &McConfig, workers: Option<usize>) -> Result<McReport> {
    config.validate()?;
    let spatial = match config.dgp {
        Dgp::Spatial { errors, psi, phi } => Some(SpatialSetup::new(config.n, errors, psi, phi, config.master_seed)?),
        _ => None,
    };
    let one = |rep: u64| -> Result<(f64, f64)> {
        let mut rng = replication_rng(config.master_seed, rep);
        let r = match &spatial {
            Some(s) => s.evaluate(&config.statistic, &s.draw(&mut rng))?,
            None => config.statistic.evaluate_iid(config.dgp.draw_iid(config.n, &mut rng))?,
        };
        if !(r.statistic.is_finite() && r.p_value.is_finite()) {
            return Err(Error::Numeric(format!("statistic {} with p-value {}", r.statistic, r.p_value)));
        }
        Ok((r.statistic, r.p_value))
    };
    let outcomes: Vec<Result<(f64, f64)>> =
        with_workers(workers, || (0..config.reps as u64).into_par_iter().map(one).collect())?;

    let mut failure_kinds = BTreeMap::new();
    let mut stats = Vec::with_capacity(outcomes.len());
    let mut pvals = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok((s, p)) => {
                stats.push(s);
                pvals.push(p);
            }
            Err(e) => *failure_kinds.entry(e.kind().to_string()).or_insert(0) += 1,
        }
    }
    let completed = stats.len();
    let failures = config.reps - completed;
    let rates = config
        .alphas
        .iter()
        .map(|&alpha| {
            let rejections = pvals.iter().filter(|&&p| p < alpha).count();
            let rate = if completed > 0 { rejections as f64 / completed as f64 } else { f64::NAN };
            let (band_lo, band_hi) = binomial_band(completed, alpha, 0.99);
            RateRow { alpha, rejections, rate, band_lo, band_hi, within_band: rate >= band_lo && rate <= band_hi }
        })
        .collect();
    let trusted = completed > 0 && failures as f64 <= MAX_FAILURE_RATE * config.reps as f64;
    let quantiles = trusted.then(|| {
        stats.sort_by(f64::total_cmp);
        QUANTILE_LEVELS.iter().map(|&l| quantile_with_se(&stats, l)).collect()
    });
    Ok(McReport { config: config.clone(), completed, failures, failure_kinds, rates, quantiles })
}

/// Null quantile table; `None` when the run had too many failures.
pub fn null_quantiles(config: &McConfig, workers: Option<usize>) -> Result<Option<Vec<QuantileRow>>> {
    Ok(run_mc(config, workers)?.quantiles)
}
