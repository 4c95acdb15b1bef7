//! Parallel-beam Radon operator, its adjoint, and classical reconstructors.

mod ellipse;
mod fbp;
mod grid;
mod iterative;
mod projector;

pub use ellipse::{analytic_ellipse_sinogram, rasterize_ellipses, Ellipse};
pub use fbp::{fbp_reconstruct, Fbp, FilterKind};
pub use grid::{ImageGrid, ImageShape, ProjectionGeometry, Sinogram};
pub use iterative::{
    cg_solve_regularized, data_fit, sirt_reconstruct, spectral_norm_sq, spectral_norm_sq_seeded,
    Sirt,
};
pub use projector::{back_project, forward_project, LinearOperator, Projector, Scaled};
