//! Reverse-diffusion sampling conditioned on a sinogram.

mod problem;
mod spec;
mod step;
mod strategies;
mod trajectory;

pub use problem::Problem;
pub use spec::{DdsWeights, GuidanceSpec, PinvKind, Sampler, Strategy, VarBayesParams};
pub use step::{reverse_step, step_from_estimate, timesteps};
pub use strategies::{
    data_gradient, dc_gradient, dc_gradient_update, dc_optimization_update, dds_objective,
    dds_sample, dds_weight_vector, ddim_chain, default_lr, dmplug_gradient, dmplug_optimize,
    dmplug_reconstruct, pnp_reconstruct, pseudoinverse_gradient, pseudoinverse_update,
    sample_reconstruct, varbayes_gradient, varbayes_reconstruct, varbayes_weight, DmPlugOutcome,
    Gradient, VarBayesGradient,
};
pub use trajectory::{Reconstruction, StepRecord, Trajectory};
