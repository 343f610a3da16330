//! Dense tensor engine with reverse-mode differentiation.
//!
//! All math runs in 64-bit so every gradient is verifiable against central
//! finite differences (see [`gradcheck`]).

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod param;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP};
pub use layers::{LayerNorm, Linear, Perceptron2};
pub use param::{Binder, Init, ParamEntry, ParamId, ParamStore};
pub use tensor::{gauss, Tensor};
