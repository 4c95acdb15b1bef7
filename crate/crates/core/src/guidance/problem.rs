use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{norm, sub};
use crate::operator::{Fbp, LinearOperator, Projector, Sinogram, Sirt};
use crate::prior::{NoiseSchedule, ScorePrior};

use super::spec::PinvKind;

/// Power-iteration count used for `∥A∥²`.
const NORM_ITERATIONS: usize = 100;

/// The measurement model, prior and schedule shared by every strategy.
pub struct Problem<'a> {
    pub projector: &'a Projector,
    pub prior: &'a ScorePrior,
    pub schedule: &'a NoiseSchedule,
    pub y: &'a [f64],
    op_norm_sq: OnceLock<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        projector: &'a Projector,
        prior: &'a ScorePrior,
        schedule: &'a NoiseSchedule,
        y: &'a Sinogram,
    ) -> Result<Self> {
        if &y.geometry != projector.geometry() {
            return Err(Error::ShapeMismatch(
                "sinogram geometry differs from the operator".into(),
            ));
        }
        Self::from_values(projector, prior, schedule, &y.values)
    }

    pub fn from_values(
        projector: &'a Projector,
        prior: &'a ScorePrior,
        schedule: &'a NoiseSchedule,
        y: &'a [f64],
    ) -> Result<Self> {
        if y.len() != projector.range_len() {
            return Err(Error::ShapeMismatch(format!(
                "operator expects {} bins, got {}",
                projector.range_len(),
                y.len()
            )));
        }
        if prior.len() != projector.domain_len() {
            return Err(Error::ShapeMismatch(format!(
                "prior has {} pixels, operator {}",
                prior.len(),
                projector.domain_len()
            )));
        }
        Ok(Self {
            projector,
            prior,
            schedule,
            y,
            op_norm_sq: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.projector.domain_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `λ_max(AᵀA)`, computed once.
    pub fn op_norm_sq(&self) -> f64 {
        *self.op_norm_sq.get_or_init(|| {
            crate::operator::spectral_norm_sq(self.projector, NORM_ITERATIONS)
                .expect("iteration count is above the minimum")
        })
    }

    /// `Ax − y`
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        sub(&self.projector.apply(x), self.y)
    }

    /// `∥Ax − y∥₂`
    pub fn data_fit(&self, x: &[f64]) -> f64 {
        norm(&self.residual(x))
    }
}

/// A linear approximate pseudoinverse and its transpose.
pub(crate) enum Pinv<'a> {
    Fbp(Box<Fbp>),
    Sirt(Sirt<'a>, usize),
}

impl<'a> Pinv<'a> {
    pub fn new(kind: PinvKind, projector: &'a Projector) -> Result<Self> {
        Ok(match kind {
            PinvKind::Fbp(filter) => Self::Fbp(Box::new(Fbp::new(
                projector.shape(),
                projector.geometry().clone(),
                filter,
            )?)),
            PinvKind::Sirt(k) => Self::Sirt(Sirt::new(projector), k),
        })
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Fbp(f) => f.apply(y),
            Self::Sirt(s, k) => s.apply_linear(y, *k),
        }
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Fbp(f) => f.apply_transpose(v),
            Self::Sirt(s, k) => s.apply_linear_transpose(v, *k),
        }
    }
}
