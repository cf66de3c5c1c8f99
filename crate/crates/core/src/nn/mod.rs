//! Dense-tensor numeric core: reverse-mode automatic differentiation on a
//! tape, graph-convolution primitives, and the Adam optimizer.
//!
//! Everything is generic over [`Scalar`] so the same code runs at f32 for
//! training (4-byte payload accounting) and at f64 for tight gradient
//! verification.

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamState, OptimizerConfig};
pub use tape::{LayerActivation, Tape, Var};
pub use tensor::{Scalar, Tensor};
