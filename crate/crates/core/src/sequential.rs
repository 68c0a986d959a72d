//! Sequential one-sided score test with a simulated boundary.
//!
//! Sampling stops with rejection at the first `n <= N` where the cumulative
//! score `S_n(theta0)` reaches the boundary `A(N)`; otherwise the null is
//! accepted at `N`. The boundary is the `(1 - alpha)` quantile of
//! `max_{n <= N} S_n` under the null. For discrete scores that quantile is an
//! atom, so the boundary carries a tie-rejection probability: a path that
//! touches `A` exactly rejects there when its tie draw falls below it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::normal_upper_quantile;
use crate::error::{Error, Result};
use crate::models::ScalarModel;
use crate::montecarlo::{replication_rng, with_workers};
use crate::trinity::Direction;

/// Scale on which the boundary is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreScale {
    /// Cumulative score `S_n(theta0)`.
    #[default]
    Raw,
    /// `S_n / sqrt(n i(theta0))`.
    Standardized,
}

/// Null value, horizon, level and orientation of a sequential test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialDesign {
    pub theta0: f64,
    pub n_max: usize,
    pub alpha: f64,
    pub direction: Direction,
    pub scale: ScoreScale,
}

impl SequentialDesign {
    pub fn new(theta0: f64, n_max: usize, alpha: f64, direction: Direction) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::domain("maximum sample size must be at least 1"));
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::domain(format!("alpha = {alpha} must lie in (0, 0.5]")));
        }
        if !theta0.is_finite() {
            return Err(Error::domain("theta0 must be finite"));
        }
        Ok(SequentialDesign { theta0, n_max, alpha, direction, scale: ScoreScale::Raw })
    }

    pub fn with_scale(mut self, scale: ScoreScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_boundary(self, boundary: CalibratedBoundary) -> SequentialPlan {
        SequentialPlan { design: self, boundary }
    }

    /// Statistic tracked at step `n` given the cumulative score.
    fn statistic<M: ScalarModel + ?Sized>(&self, model: &M, cumulative: f64, n: usize) -> f64 {
        let oriented = self.direction.sign() * cumulative;
        match self.scale {
            ScoreScale::Raw => oriented,
            ScoreScale::Standardized => oriented / (n as f64 * model.unit_information(self.theta0)).sqrt(),
        }
    }
}

/// Boundary level plus the rejection probability applied when a path hits it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedBoundary {
    pub level: f64,
    pub tie_prob: f64,
}

impl CalibratedBoundary {
    pub fn fixed(level: f64) -> Self {
        CalibratedBoundary { level, tie_prob: 0.0 }
    }

    pub fn never() -> Self {
        Self::fixed(f64::INFINITY)
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.level.abs().max(1.0)
    }

    fn exceeds(&self, stat: f64) -> bool {
        stat > self.level + self.tolerance()
    }

    fn touches(&self, stat: f64) -> bool {
        self.level.is_finite() && (stat - self.level).abs() <= self.tolerance()
    }

    fn crossed(&self, stat: f64, tie_draw: f64) -> bool {
        self.exceeds(stat) || (self.touches(stat) && tie_draw < self.tie_prob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialPlan {
    pub design: SequentialDesign,
    pub boundary: CalibratedBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Reject,
    AcceptAtN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialOutcome {
    pub decision: Decision,
    pub stopping_time: usize,
    /// Statistic at `n = 1..=stopping_time`.
    pub trajectory: Vec<f64>,
}

/// Run the plan on a stream of observations.
///
/// `tie_draw` in `[0, 1)` decides rejection at an exact boundary hit; it is
/// irrelevant when the boundary has no tie probability.
pub fn run_sequential<M: ScalarModel + ?Sized>(
    model: &M,
    observations: impl IntoIterator<Item = f64>,
    plan: &SequentialPlan,
    tie_draw: f64,
) -> Result<SequentialOutcome> {
    let d = &plan.design;
    let mut cumulative = 0.0;
    let mut trajectory = Vec::with_capacity(d.n_max);
    let mut stream = observations.into_iter();
    for n in 1..=d.n_max {
        let y = stream.next().ok_or(Error::StreamExhausted { available: n - 1, required: d.n_max })?;
        let s = model.unit_score(y, d.theta0);
        if !s.is_finite() {
            return Err(Error::Numeric(format!("score of observation {n} is {s}")));
        }
        cumulative += s;
        let stat = d.statistic(model, cumulative, n);
        trajectory.push(stat);
        if plan.boundary.crossed(stat, tie_draw) {
            return Ok(SequentialOutcome { decision: Decision::Reject, stopping_time: n, trajectory });
        }
    }
    Ok(SequentialOutcome { decision: Decision::AcceptAtN, stopping_time: d.n_max, trajectory })
}

/// Running sums of per-observation scores at `theta0`.
pub fn score_path<M: ScalarModel + ?Sized>(model: &M, theta0: f64, observations: &[f64]) -> Vec<f64> {
    observations
        .iter()
        .scan(0.0, |acc, &y| {
            *acc += model.unit_score(y, theta0);
            Some(*acc)
        })
        .collect()
}

/// One simulated path: its tie draw, full statistic trajectory and final cumulative score.
struct SimPath {
    tie_draw: f64,
    stats: Vec<f64>,
    final_score: f64,
}

/// Replication `rep`: one tie draw, then `n_max` observations at `theta`.
fn simulate_path<M: ScalarModel + ?Sized>(model: &M, d: &SequentialDesign, theta: f64, seed: u64, rep: u64) -> SimPath {
    let mut rng = replication_rng(seed, rep);
    let tie_draw: f64 = rng.random();
    let mut cumulative = 0.0;
    let stats = (1..=d.n_max)
        .map(|n| {
            cumulative += model.unit_score(model.sample(theta, &mut rng), d.theta0);
            d.statistic(model, cumulative, n)
        })
        .collect();
    SimPath { tie_draw, stats, final_score: cumulative }
}

/// Calibrated boundary with its Monte Carlo precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub boundary: CalibratedBoundary,
    /// Half-width of the order-statistic interval at plus or minus one binomial standard deviation.
    pub mc_se: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Minimum number of null simulations accepted by [`calibrate_boundary`].
pub const MIN_CALIBRATION_REPS: usize = 1000;

/// Simulate `reps` null paths and take the `(1 - alpha)` quantile of the running maximum.
///
/// The tie probability makes the rejection rate on the calibration sample equal
/// to `alpha`: `P(M > A) + tie_prob * P(M = A) = alpha`.
pub fn calibrate_boundary<M: ScalarModel + Sync + ?Sized>(
    model: &M,
    design: &SequentialDesign,
    reps: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Calibration> {
    if reps < MIN_CALIBRATION_REPS {
        return Err(Error::domain(format!("calibration needs at least {MIN_CALIBRATION_REPS} replications, got {reps}")));
    }
    let mut maxima: Vec<f64> = with_workers(workers, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                simulate_path(model, design, design.theta0, seed, rep).stats.into_iter().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    })?;
    if let Some(bad) = maxima.iter().find(|m| !m.is_finite()) {
        return Err(Error::Numeric(format!("simulated running maximum is {bad}")));
    }
    maxima.sort_by(f64::total_cmp);
    let boundary = boundary_from_sorted(&maxima, design.alpha);
    let r = reps as f64;
    let spread = (r * design.alpha * (1.0 - design.alpha)).sqrt();
    let centre = (1.0 - design.alpha) * r;
    let at = |pos: f64| maxima[(pos.ceil() as usize).clamp(1, reps) - 1];
    let mc_se = 0.5 * (at(centre + spread) - at(centre - spread));
    Ok(Calibration { boundary, mc_se, reps, seed })
}

/// Quantile boundary and tie probability from sorted running maxima.
pub fn boundary_from_sorted(sorted: &[f64], alpha: f64) -> CalibratedBoundary {
    let r = sorted.len();
    let k = (((1.0 - alpha) * r as f64).ceil() as usize).clamp(1, r);
    let level = sorted[k - 1];
    let probe = CalibratedBoundary::fixed(level);
    let above = sorted.iter().filter(|&&m| probe.exceeds(m)).count() as f64 / r as f64;
    let at = sorted.iter().filter(|&&m| probe.touches(m)).count() as f64 / r as f64;
    let tie_prob = if at > 0.0 { ((alpha - above) / at).clamp(0.0, 1.0) } else { 0.0 };
    CalibratedBoundary { level, tie_prob }
}

/// Rejection rate, stopping behaviour and fixed-sample power at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialSummary {
    pub theta: f64,
    pub reps: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub expected_stopping_time: f64,
    /// Rejection rate of the one-sided score test on all `N` observations at the same level.
    pub fixed_power: f64,
}

/// Simulate the plan at `theta`; replication `i` uses the same stream for every `theta`.
pub fn simulate_plan<M: ScalarModel + Sync + ?Sized>(
    model: &M,
    plan: &SequentialPlan,
    theta: f64,
    reps: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<SequentialSummary> {
    if reps == 0 {
        return Err(Error::domain("reps must be positive"));
    }
    let d = &plan.design;
    let crit = normal_upper_quantile(d.alpha);
    let info0 = d.n_max as f64 * model.unit_information(d.theta0);
    let outcomes: Vec<(bool, usize, bool)> = with_workers(workers, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let path = simulate_path(model, d, theta, seed, rep);
                let stop = path.stats.iter().position(|&s| plan.boundary.crossed(s, path.tie_draw));
                let fixed = d.direction.sign() * path.final_score / info0.sqrt() > crit;
                (stop.is_some(), stop.map_or(d.n_max, |i| i + 1), fixed)
            })
            .collect()
    })?;
    let rejections = outcomes.iter().filter(|o| o.0).count();
    let r = reps as f64;
    Ok(SequentialSummary {
        theta,
        reps,
        rejections,
        rejection_rate: rejections as f64 / r,
        expected_stopping_time: outcomes.iter().map(|o| o.1 as f64).sum::<f64>() / r,
        fixed_power: outcomes.iter().filter(|o| o.2).count() as f64 / r,
    })
}

/// Sequential against fixed-sample testing at each alternative, with common random numbers.
pub fn compare_fixed_vs_sequential<M: ScalarModel + Sync + ?Sized>(
    model: &M,
    alternatives: &[f64],
    plan: &SequentialPlan,
    reps: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<SequentialSummary>> {
    alternatives.iter().map(|&theta| simulate_plan(model, plan, theta, reps, seed, workers)).collect()
}
