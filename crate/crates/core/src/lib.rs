#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod operator;
pub mod simulate;
pub mod harness;
pub mod prior;
pub mod analysis;
pub mod guidance;
pub mod mbir;

pub use error::{Error, Result};

/// The guide's code blocks, compiled and run by `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operator.md")]
    mod operator {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/priors.md")]
    mod priors {}
    #[doc = include_str!("../../../book/src/guidance.md")]
    mod guidance {}
    #[doc = include_str!("../../../book/src/mbir.md")]
    mod mbir {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
