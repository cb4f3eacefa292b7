//! Minimal reverse-mode tensor engine.
//!
//! Operations are recorded on a [`Tape`] as they run; [`Tape::backward`]
//! replays them in reverse to accumulate exact gradients. Only the primitives
//! the model needs are provided. Everything is 64-bit.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{Adam, AdamConfig};
pub use params::ParamStore;
pub use tape::{gelu_scalar, Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;
