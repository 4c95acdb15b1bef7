use super::score::GaussianPrior;
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, CgSettings};
use crate::operator::{ImageGrid, LinearOperator, Projector, Sinogram};

/// Closed-form posterior for a Gaussian prior and Gaussian likelihood
/// `y = Ax + n`, `n ~ N(0, noise_var·I)`.
#[derive(Debug, Clone)]
pub struct AnalyticPosterior<'a> {
    pub mean: ImageGrid,
    projector: &'a Projector,
    prior_variance: Vec<f64>,
    noise_var: f64,
    settings: CgSettings,
}

impl AnalyticPosterior<'_> {
    /// Precision `Σ₀⁻¹ + AᵀA/σ²` applied to `v`.
    pub fn precision_apply(&self, v: &[f64], out: &mut [f64]) {
        let av = self.projector.apply(v);
        self.projector.adjoint_into(&av, out);
        for ((o, vi), var) in out.iter_mut().zip(v).zip(&self.prior_variance) {
            *o = *o / self.noise_var + vi / var;
        }
    }

    /// Posterior covariance applied to `v`.
    pub fn covariance_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let zero = vec![0.0; v.len()];
        Ok(conjugate_gradient(|a, o| self.precision_apply(a, o), v, &zero, self.settings)?.solution)
    }

    /// Diagonal of the posterior covariance, one solve per pixel.
    pub fn marginal_variances(&self) -> Result<Vec<f64>> {
        let n = self.prior_variance.len();
        let mut e = vec![0.0; n];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            e[i] = 1.0;
            out.push(self.covariance_apply(&e)?[i]);
            e[i] = 0.0;
        }
        Ok(out)
    }
}

pub fn analytic_posterior<'a>(
    prior: &GaussianPrior,
    projector: &'a Projector,
    y: &Sinogram,
    noise_var: f64,
) -> Result<AnalyticPosterior<'a>> {
    analytic_posterior_with(prior, projector, y, noise_var, CgSettings {
        tolerance: 1e-12,
        max_iterations: 5000,
        truncate: false,
    })
}

pub fn analytic_posterior_with<'a>(
    prior: &GaussianPrior,
    projector: &'a Projector,
    y: &Sinogram,
    noise_var: f64,
    settings: CgSettings,
) -> Result<AnalyticPosterior<'a>> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidInput("noise variance must be positive".into()));
    }
    if prior.mean.len() != projector.domain_len() || y.values.len() != projector.range_len() {
        return Err(Error::ShapeMismatch("prior, operator and sinogram disagree".into()));
    }
    let mut post = AnalyticPosterior {
        mean: ImageGrid::zeros(projector.shape()),
        projector,
        prior_variance: prior.variance.clone(),
        noise_var,
        settings,
    };
    let mut rhs = projector.adjoint(&y.values);
    for ((r, m), v) in rhs.iter_mut().zip(&prior.mean).zip(&prior.variance) {
        *r = *r / noise_var + m / v;
    }
    let out = conjugate_gradient(|a, o| post.precision_apply(a, o), &rhs, &prior.mean, settings)?;
    post.mean = ImageGrid::from_values(projector.shape(), out.solution)?;
    Ok(post)
}
