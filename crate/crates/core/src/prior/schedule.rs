use crate::error::{invalid, Result};

/// Discrete variance-preserving noise schedule.
///
/// Steps are indexed `1..=T`; `alpha_bar(0)` is defined as 1 so the final
/// reverse step lands on the clean estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.02;

pub fn linear_beta_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(invalid("schedule needs at least 2 steps"));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(invalid(format!(
            "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(invalid("betas must lie in (0, 1)"));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        linear_beta_schedule(DEFAULT_STEPS, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
            .expect("default schedule is valid")
    }
}
