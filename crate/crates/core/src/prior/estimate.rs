use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::operator::{ImageGrid, ImageShape};

pub(crate) fn tweedie(x: &[f64], score: &[f64], ab: f64) -> Vec<f64> {
    let s = ab.sqrt();
    x.iter()
        .zip(score)
        .map(|(xi, si)| (xi + (1.0 - ab) * si) / s)
        .collect()
}

pub(crate) fn ddpm(x: &[f64], eps: &[f64], ab: f64) -> Vec<f64> {
    let s = ab.sqrt();
    let n = (1.0 - ab).sqrt();
    x.iter().zip(eps).map(|(xi, ei)| (xi - n * ei) / s).collect()
}

/// `ε̂ = −√(1−ᾱ_t) · score`
pub fn eps_from_score(score: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    let n = (1.0 - schedule.alpha_bar(t)).sqrt();
    score.iter().map(|s| -n * s).collect()
}

/// Inverse of [`eps_from_score`]; requires `t ≥ 1`.
pub fn score_from_eps(eps: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    let n = (1.0 - schedule.alpha_bar(t)).sqrt();
    eps.iter().map(|e| -e / n).collect()
}

fn check(t: usize, schedule: &NoiseSchedule, shape: ImageShape, other: usize) -> Result<()> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidInput(format!(
            "t = {t} outside 1..={}",
            schedule.steps()
        )));
    }
    if shape.len() != other {
        return Err(Error::ShapeMismatch(format!(
            "image has {} pixels, field {other}",
            shape.len()
        )));
    }
    Ok(())
}

/// `x̂₀ = (x_t + (1−ᾱ_t)·score) / √ᾱ_t`
pub fn tweedie_estimate(
    x_t: &ImageGrid,
    score: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<ImageGrid> {
    check(t, schedule, x_t.shape, score.len())?;
    ImageGrid::from_values(x_t.shape, tweedie(&x_t.values, score, schedule.alpha_bar(t)))
}

/// `x̂₀ = (x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`
pub fn ddpm_estimate(
    x_t: &ImageGrid,
    eps_hat: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<ImageGrid> {
    check(t, schedule, x_t.shape, eps_hat.len())?;
    ImageGrid::from_values(x_t.shape, ddpm(&x_t.values, eps_hat, schedule.alpha_bar(t)))
}
