//! Noise schedules, closed-form score priors and the clean-image estimators.

mod estimate;
mod posterior;
mod schedule;
mod score;

pub(crate) use estimate::tweedie;
pub use estimate::{ddpm_estimate, eps_from_score, score_from_eps, tweedie_estimate};
pub use posterior::{analytic_posterior, analytic_posterior_with, AnalyticPosterior};
pub use schedule::{
    linear_beta_schedule, NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_STEPS,
};
pub use score::{
    GaussianMixture, GaussianPrior, JacobianMode, MixtureComponent, ScoreFn, ScorePrior,
};

use crate::error::Result;
use crate::operator::ImageGrid;

/// Score of the noised Gaussian prior at step `t`.
pub fn gaussian_score(
    x_t: &ImageGrid,
    t: usize,
    schedule: &NoiseSchedule,
    prior: &GaussianPrior,
) -> Result<ImageGrid> {
    let s = ScorePrior::Gaussian(prior.clone()).score(&x_t.values, t, schedule)?;
    ImageGrid::from_values(x_t.shape, s)
}

/// Score of the noised mixture prior at step `t`.
pub fn gmm_score(
    x_t: &ImageGrid,
    t: usize,
    schedule: &NoiseSchedule,
    mixture: &GaussianMixture,
) -> Result<ImageGrid> {
    let s = ScorePrior::Mixture(mixture.clone()).score(&x_t.values, t, schedule)?;
    ImageGrid::from_values(x_t.shape, s)
}
