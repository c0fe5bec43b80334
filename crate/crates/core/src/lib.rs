//! Physics-aware training of physical neural networks.
//!
//! A physical layer is trained with the real (here: simulated) system in the
//! forward pass and a differentiable digital model in the backward pass.
//! The crate also ships the two baselines, data-driven digital models,
//! gap diagnostics, and a calculator for the cost of simulating physical
//! systems digitally.

pub mod arch;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod digital;
pub mod error;
pub mod physics;
pub mod ssa;
pub mod train;

pub use error::{PatError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/split.md")]
    mod split {}
    #[doc = include_str!("../../../book/src/physics.md")]
    mod physics {}
    #[doc = include_str!("../../../book/src/digital.md")]
    mod digital {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/ssa.md")]
    mod ssa {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
