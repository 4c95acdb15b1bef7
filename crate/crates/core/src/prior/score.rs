use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::NoiseSchedule;
use crate::error::{invalid, Error, Result};
use crate::linalg::dot;

/// How `∂x̂₀/∂x_t` is evaluated when chaining gradients through the clean estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Exact derivative of the closed-form estimator.
    Exact,
    /// `∂x̂₀/∂x_t ≈ I`.
    Identity,
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean has {} entries, variance {}",
                mean.len(),
                variance.len()
            )));
        }
        if variance.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("prior variances must be positive and finite"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("prior mean".into()));
        }
        Ok(Self { mean, variance })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![variance; n])
    }

    /// Marginal variance of `x_t` per pixel.
    fn marginal(&self, ab: f64) -> impl Iterator<Item = f64> + '_ {
        self.variance.iter().map(move |v| ab * v + 1.0 - ab)
    }

    fn score(&self, x: &[f64], ab: f64) -> Vec<f64> {
        let s = ab.sqrt();
        x.iter()
            .zip(&self.mean)
            .zip(self.marginal(ab))
            .map(|((xi, mi), vi)| -(xi - s * mi) / vi)
            .collect()
    }

    fn log_density(&self, x: &[f64], ab: f64) -> f64 {
        let s = ab.sqrt();
        let mut acc = 0.0;
        for ((xi, mi), vi) in x.iter().zip(&self.mean).zip(self.marginal(ab)) {
            let d = xi - s * mi;
            acc -= 0.5 * (d * d / vi + vi.ln() + std::f64::consts::TAU.ln());
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Mixture of diagonal Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(invalid("mixture needs at least one component"));
        };
        let n = first.mean.len();
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("mixture weights sum to {total}, not 1")));
        }
        for c in &components {
            if !(c.weight > 0.0) {
                return Err(invalid("mixture weights must be positive"));
            }
            if c.mean.len() != n || c.variance.len() != n {
                return Err(Error::ShapeMismatch("mixture components differ in size".into()));
            }
            if c.variance.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(invalid("mixture variances must be positive and finite"));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Log of `w_k N(x; √ᾱ μ_k, ᾱΣ_k + (1−ᾱ)I)` per component, plus each component score.
    fn parts(&self, x: &[f64], ab: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let s = ab.sqrt();
        let mut logs = Vec::with_capacity(self.components.len());
        let mut scores = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let mut lp = c.weight.ln();
            let mut sc = Vec::with_capacity(x.len());
            for ((xi, mi), vi) in x.iter().zip(&c.mean).zip(&c.variance) {
                let v = ab * vi + 1.0 - ab;
                let d = xi - s * mi;
                lp -= 0.5 * (d * d / v + v.ln() + std::f64::consts::TAU.ln());
                sc.push(-d / v);
            }
            logs.push(lp);
            scores.push(sc);
        }
        (logs, scores)
    }

    fn responsibilities(logs: &[f64]) -> (Vec<f64>, f64) {
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let z: f64 = w.iter().sum();
        (w.iter().map(|v| v / z).collect(), peak + z.ln())
    }

    fn score(&self, x: &[f64], ab: f64) -> Vec<f64> {
        let (logs, scores) = self.parts(x, ab);
        let (r, _) = Self::responsibilities(&logs);
        let mut out = vec![0.0; x.len()];
        for (rk, sk) in r.iter().zip(&scores) {
            for (o, s) in out.iter_mut().zip(sk) {
                *o += rk * s;
            }
        }
        out
    }

    fn log_density(&self, x: &[f64], ab: f64) -> f64 {
        Self::responsibilities(&self.parts(x, ab).0).1
    }

    /// Hessian of the log-density applied to `v`:
    /// `Σ r_k H_k v + Σ r_k s_k (s_k·v) − s (s·v)`.
    fn hessian_vec(&self, x: &[f64], ab: f64, v: &[f64]) -> Vec<f64> {
        let (logs, scores) = self.parts(x, ab);
        let (r, _) = Self::responsibilities(&logs);
        let mut out = vec![0.0; x.len()];
        let mut mean_score = vec![0.0; x.len()];
        for ((rk, sk), c) in r.iter().zip(&scores).zip(&self.components) {
            let sv = dot(sk, v);
            for i in 0..x.len() {
                let var = ab * c.variance[i] + 1.0 - ab;
                out[i] += rk * (-v[i] / var + sk[i] * sv);
                mean_score[i] += rk * sk[i];
            }
        }
        let msv = dot(&mean_score, v);
        for (o, m) in out.iter_mut().zip(&mean_score) {
            *o -= m * msv;
        }
        out
    }
}

/// Score callback for priors not available in closed form: `(x_t, t) -> ∇ log p_t(x_t)`.
pub type ScoreFn = Arc<dyn Fn(&[f64], usize) -> Vec<f64> + Send + Sync>;

/// A prior over clean images, used through the score of its noised marginals.
#[derive(Clone)]
pub enum ScorePrior {
    Gaussian(GaussianPrior),
    Mixture(GaussianMixture),
    External { len: usize, score: ScoreFn },
}

impl fmt::Debug for ScorePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian(g) => f.debug_tuple("Gaussian").field(&g.mean.len()).finish(),
            Self::Mixture(m) => f
                .debug_tuple("Mixture")
                .field(&m.components.len())
                .finish(),
            Self::External { len, .. } => f.debug_struct("External").field("len", len).finish(),
        }
    }
}

impl ScorePrior {
    pub fn external(len: usize, score: impl Fn(&[f64], usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self::External {
            len,
            score: Arc::new(score),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.mean.len(),
            Self::Mixture(m) => m.components[0].mean.len(),
            Self::External { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "prior has {} pixels, input {}",
                self.len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// `∇ log p_t(x_t)` for `t` in `0..=T`.
    pub fn score(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        self.check(x)?;
        let ab = schedule.alpha_bar(t);
        let out = match self {
            Self::Gaussian(g) => g.score(x, ab),
            Self::Mixture(m) => m.score(x, ab),
            Self::External { score, len } => {
                let s = score(x, t);
                if s.len() != *len {
                    return Err(Error::ShapeMismatch("external score returned wrong size".into()));
                }
                s
            }
        };
        Ok(out)
    }

    /// `log p_t(x_t)`, or `None` for external priors.
    pub fn log_density(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Option<f64> {
        let ab = schedule.alpha_bar(t);
        match self {
            Self::Gaussian(g) => Some(g.log_density(x, ab)),
            Self::Mixture(m) => Some(m.log_density(x, ab)),
            Self::External { .. } => None,
        }
    }

    /// Best Jacobian mode this prior supports.
    pub fn jacobian_mode(&self) -> JacobianMode {
        match self {
            Self::External { .. } => JacobianMode::Identity,
            _ => JacobianMode::Exact,
        }
    }

    /// Clean-image estimate `x̂₀(x_t)` by Tweedie's formula.
    pub fn denoise(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        let score = self.score(x, t, schedule)?;
        Ok(super::tweedie(x, &score, schedule.alpha_bar(t)))
    }

    /// `(∂x̂₀/∂x_t)ᵀ v`. The Jacobian is symmetric for every closed-form prior.
    /// Returns the mode actually used (`Identity` if requested or unavoidable).
    pub fn denoise_vjp(
        &self,
        x: &[f64],
        t: usize,
        schedule: &NoiseSchedule,
        v: &[f64],
        requested: JacobianMode,
    ) -> Result<(Vec<f64>, JacobianMode)> {
        self.check(x)?;
        self.check(v)?;
        let ab = schedule.alpha_bar(t);
        let mode = if requested == JacobianMode::Identity {
            JacobianMode::Identity
        } else {
            self.jacobian_mode()
        };
        let out = match (mode, self) {
            (JacobianMode::Identity, _) | (_, Self::External { .. }) => v.to_vec(),
            (JacobianMode::Exact, Self::Gaussian(g)) => {
                let s = ab.sqrt();
                v.iter()
                    .zip(&g.variance)
                    .map(|(vi, var)| vi * s * var / (ab * var + 1.0 - ab))
                    .collect()
            }
            (JacobianMode::Exact, Self::Mixture(m)) => {
                let hv = m.hessian_vec(x, ab, v);
                let inv = 1.0 / ab.sqrt();
                v.iter()
                    .zip(&hv)
                    .map(|(vi, h)| inv * (vi + (1.0 - ab) * h))
                    .collect()
            }
        };
        Ok((out, mode))
    }

    /// One draw from the clean-image distribution (closed-form priors only).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let (mean, var) = match self {
            Self::Gaussian(g) => (&g.mean, &g.variance),
            Self::Mixture(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = m.components.last().unwrap();
                for c in &m.components {
                    acc += c.weight;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                (&pick.mean, &pick.variance)
            }
            Self::External { .. } => return Err(invalid("cannot sample an external prior")),
        };
        Ok(mean
            .iter()
            .zip(var)
            .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    /// Mean of the clean-image distribution, if known.
    pub fn mean(&self) -> Option<Vec<f64>> {
        match self {
            Self::Gaussian(g) => Some(g.mean.clone()),
            Self::Mixture(m) => {
                let mut out = vec![0.0; self.len()];
                for c in &m.components {
                    for (o, mu) in out.iter_mut().zip(&c.mean) {
                        *o += c.weight * mu;
                    }
                }
                Some(out)
            }
            Self::External { .. } => None,
        }
    }
}
