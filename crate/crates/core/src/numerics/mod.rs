//! Dense tensors, reverse-mode differentiation, finite differences and Adam.

mod adam;
mod fd;
mod params;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use fd::finite_difference_gradient;
pub use params::{Bound, Mlp, Params};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
