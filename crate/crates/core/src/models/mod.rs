//! Concrete likelihood models and the closed-form statistics built on them.

mod bernoulli;
mod cauchy;
pub mod diagnostics;
mod multinomial;
mod normal;
mod regression;

pub use bernoulli::BernoulliModel;
pub use cauchy::CauchyModel;
pub use diagnostics::{
    breusch_pagan, jarque_bera, jarque_bera_from_moments, koenker, robust_skewness_from_moments, NormalityMoments,
    robust_skewness_test, skewness_variance, HeteroskedasticityOptions, ResidualMoments, SkewnessTests,
};
pub use multinomial::{pearson_statistic, MultinomialModel};
pub use normal::NormalModel;
pub use regression::{ols, OlsFit, RegressionData, RegressionModel};

use rand::RngCore;

use crate::likelihood::LikelihoodModel;

/// Single-parameter iid model usable for streaming and simulation.
pub trait ScalarModel: LikelihoodModel {
    /// Score of one observation `y` at `theta`.
    fn unit_score(&self, y: f64, theta: f64) -> f64;

    /// Expected information of one observation.
    fn unit_information(&self, theta: f64) -> f64;

    /// Draw one observation from the model at `theta`.
    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64;
}

pub(crate) fn column_y(data: &crate::likelihood::Dataset) -> &[f64] {
    data.column("y").expect("validate_data guarantees a 'y' column")
}
