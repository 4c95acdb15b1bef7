use rand::Rng;
use rand_distr::StandardNormal;

use super::spec::Sampler;
use crate::error::{invalid, Result};
use crate::prior::{eps_from_score, tweedie, NoiseSchedule, ScorePrior};

/// Evenly strided timesteps `[(t, t_prev)]` from `T` down to 1, ending at `t_prev = 0`.
pub fn timesteps(total: usize, steps: usize) -> Vec<(usize, usize)> {
    let steps = steps.clamp(1, total);
    let at = |i: usize| i * total / steps;
    (1..=steps).rev().map(|i| (at(i), at(i - 1))).collect()
}

/// Moves from `x_t` to `x_{t_prev}` given the clean and noise estimates.
#[allow(clippy::too_many_arguments)]
pub fn step_from_estimate<R: Rng + ?Sized>(
    x_t: &[f64],
    x0_hat: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    sampler: Sampler,
    ddim_eta: f64,
    rng: &mut R,
) -> Vec<f64> {
    let ab = schedule.alpha_bar(t);
    let ap = schedule.alpha_bar(t_prev);
    match sampler {
        Sampler::Ddim => {
            let sigma = ddim_eta * ((1.0 - ap) / (1.0 - ab) * (1.0 - ab / ap)).max(0.0).sqrt();
            let dir = (1.0 - ap - sigma * sigma).max(0.0).sqrt();
            let sp = ap.sqrt();
            x0_hat
                .iter()
                .zip(eps_hat)
                .map(|(x0, e)| {
                    let mut v = sp * x0 + dir * e;
                    if sigma > 0.0 {
                        v += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                    v
                })
                .collect()
        }
        Sampler::Ddpm => {
            let beta = 1.0 - ab / ap;
            let c0 = ap.sqrt() * beta / (1.0 - ab);
            let ct = (ab / ap).sqrt() * (1.0 - ap) / (1.0 - ab);
            let sigma = ((1.0 - ap) / (1.0 - ab) * beta).max(0.0).sqrt();
            x0_hat
                .iter()
                .zip(x_t)
                .map(|(x0, xt)| {
                    let mut v = c0 * x0 + ct * xt;
                    if sigma > 0.0 {
                        v += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                    v
                })
                .collect()
        }
    }
}

/// One unconditional reverse step from `t` to `t_prev`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_step<R: Rng + ?Sized>(
    x_t: &[f64],
    t: usize,
    t_prev: usize,
    prior: &ScorePrior,
    schedule: &NoiseSchedule,
    sampler: Sampler,
    ddim_eta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if t == 0 || t_prev >= t || t > schedule.steps() {
        return Err(invalid(format!("need 0 <= t_prev < t <= T, got {t_prev}, {t}")));
    }
    let score = prior.score(x_t, t, schedule)?;
    let x0 = tweedie(x_t, &score, schedule.alpha_bar(t));
    let eps = eps_from_score(&score, t, schedule);
    Ok(step_from_estimate(
        x_t, &x0, &eps, t, t_prev, schedule, sampler, ddim_eta, rng,
    ))
}
