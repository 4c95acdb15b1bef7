use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::operator::{spectral_norm_sq, ImageGrid, LinearOperator, ProjectionGeometry, Projector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandweberSettings {
    /// Step size; `None` means `1.9 / λ_max(AᵀA)`.
    pub alpha: Option<f64>,
    /// Absolute stopping threshold on `∥Ax∥`; `None` means `relative_eps·∥Ax⁰∥`.
    pub eps: Option<f64>,
    pub relative_eps: f64,
    pub max_iterations: usize,
}

impl Default for LandweberSettings {
    fn default() -> Self {
        Self {
            alpha: None,
            eps: None,
            relative_eps: 1e-6,
            max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub x_range: ImageGrid,
    pub x_null: ImageGrid,
    /// `∥x_null∥² / ∥x∥²`, or 0 for a zero image.
    pub null_energy_fraction: f64,
    pub iterations_used: usize,
    /// `∥A x_null∥` on exit.
    pub final_residual: f64,
}

pub fn null_space_component(
    x: &ImageGrid,
    geometry: &ProjectionGeometry,
    settings: LandweberSettings,
) -> Result<DecompositionResult> {
    let projector = Projector::new(x.shape, geometry.clone())?;
    null_space_component_with(&projector, x, settings)
}

/// Splits `x` into the part the measurements see and the part they do not,
/// by running `x ← x − α Aᵀ(Ax)` from `x` until `∥Ax∥ < eps`.
pub fn null_space_component_with(
    projector: &Projector,
    x: &ImageGrid,
    settings: LandweberSettings,
) -> Result<DecompositionResult> {
    if x.shape != projector.shape() {
        return Err(Error::ShapeMismatch("image and operator shapes differ".into()));
    }
    let alpha = match settings.alpha {
        Some(a) if a > 0.0 && a.is_finite() => a,
        Some(_) => return Err(invalid("alpha must be positive")),
        None => 1.9 / spectral_norm_sq(projector, 100)?,
    };
    let mut v = x.values.clone();
    let mut av = projector.apply(&v);
    let start = norm(&av);
    let eps = match settings.eps {
        Some(e) if e > 0.0 => e,
        Some(_) => return Err(invalid("eps must be positive")),
        None => settings.relative_eps * start,
    };
    let mut residual = start;
    let mut iterations = 0;
    while residual >= eps && residual > 0.0 {
        if iterations == settings.max_iterations {
            return Err(Error::LandweberNotConverged {
                iterations,
                residual,
            });
        }
        let g = projector.adjoint(&av);
        axpy(-alpha, &g, &mut v);
        av = projector.apply(&v);
        residual = norm(&av);
        if !residual.is_finite() {
            return Err(Error::NonFinite("Landweber residual".into()));
        }
        iterations += 1;
    }
    let total = dot(&x.values, &x.values);
    let fraction = if total > 0.0 { dot(&v, &v) / total } else { 0.0 };
    let range = x.values.iter().zip(&v).map(|(a, b)| a - b).collect();
    Ok(DecompositionResult {
        x_range: ImageGrid {
            shape: x.shape,
            values: range,
        },
        x_null: ImageGrid {
            shape: x.shape,
            values: v,
        },
        null_energy_fraction: fraction,
        iterations_used: iterations,
        final_residual: residual,
    })
}
