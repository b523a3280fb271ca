//! Minimal dense numeric kernel: matrices, linear and PReLU layers, masked
//! softmax with cross-entropy, and finite-difference gradient checking.
//!
//! Everything is `f64`. Backward passes are written by hand; there is no
//! autodiff graph.

pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod params;
pub mod softmax;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layers::{linear_forward, prelu_forward, LinearLayer, PReluLayer};
pub use matrix::{matmul, Matrix};
pub use params::{ParamGroup, ParamKind, ParamView, Parameterized};
pub use softmax::{cross_entropy, masked_softmax, softmax, MaskedDistribution};
