//! Range/null-space decomposition, image-quality metrics and uncertainty maps.

mod metrics;
mod nullspace;

pub use metrics::{
    compute_metrics, compute_metrics_with, psnr, ssim, uncertainty_map, MetricsReport,
    PSNR_IDENTICAL,
};
pub use nullspace::{
    null_space_component, null_space_component_with, DecompositionResult, LandweberSettings,
};
