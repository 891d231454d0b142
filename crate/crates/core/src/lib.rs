//! Pocket-conditioned equivariant consistency model for scaffold generation.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors, reverse-mode gradients, Adam.
//! - [`geometry`]: atoms, synthetic complexes, radius graphs, bonds, clashes,
//!   fingerprints.
//! - [`model`]: the equivariant message-passing denoiser.
//! - [`consistency`]: noise schedule, consistency function, training loop.
//! - [`sampling`]: metric-selected multistep sampling, PF-ODE baselines,
//!   inpainting.
//! - [`rl`]: policy-gradient fine-tuning of the multistep sampler.
//! - [`eval`]: batch metrics, geometry divergences, timing tables.
//! - [`io`]: run configuration, complex files, checkpoints, run directories.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod consistency;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod model;
pub mod rl;
pub mod rng;
pub mod sampling;

pub use autodiff::{Params, Tensor, TensorError};
pub use consistency::{EmaPair, NoiseSchedule};
pub use geometry::{Atom, Complex, Element, MolecularContext, ScaffoldState};
pub use model::{Denoiser, DenoiserConfig, PreparedContext};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("synthesis failed after {attempts} attempts; last failed constraint: {constraint}")]
    Synthesis { constraint: String, attempts: usize },
    #[error("pocket is empty after filtering to {cutoff} Å")]
    EmptyPocket { cutoff: f64 },
    #[error("scaffold mask selects no atoms")]
    EmptyScaffold,
    #[error("non-finite value in denoiser at {layer}")]
    NonFinite { layer: String },
    #[error("sampler diverged at step {step}")]
    Diverged { step: usize },
    #[error("training loss became non-finite: {0}")]
    NanLoss(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] io::FormatError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
