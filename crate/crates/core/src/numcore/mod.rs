//! Dense `f64` tensors, layers with hand-derived backward passes, Adam, and
//! a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod param;
pub mod rng;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamState};
pub use gradcheck::{gradcheck, probe_loss, GradcheckConfig, GradcheckReport, Inputs};
pub use layers::{activation, linear_forward, Activation, ActivationLayer, Linear, Mlp};
pub use param::{Param, Parameterized, Visitor};
pub use rng::Rng;
pub use tensor::Tensor2;
