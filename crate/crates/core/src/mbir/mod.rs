//! Total-variation regularized reconstruction: FISTA with a TV proximal map,
//! and ADMM with a split gradient variable.

mod solvers;
mod tv;

pub use solvers::{admm_tv, admm_tv_with, fista_tv, fista_tv_with, MbirOutcome, TvSpec};
pub use tv::{divergence, gradient, tv_prox, tv_seminorm};
