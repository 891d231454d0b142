//! Dense `f64` tensors, reverse-mode differentiation, and optimizers.

mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckOptions, GradCheckReport};
pub use graph::{Gradients, Graph, ParamVars, Var, RECIP_FLOOR};
pub use optim::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use params::Params;
pub use tensor::Tensor;


#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
