//! Flat, forked and bilinearly factorized classifier heads for two-factor
//! (adjective × noun) label prediction.
//!
//! The factorized head scores every cell of the adjective × noun grid as
//! `Y = A·Nᵀ`, where each example is mapped to an adjective matrix `A`
//! (`A_count × M`) and a noun matrix `N` (`N_count × M`). Because every cell
//! is scored through the shared factors, pairs never seen during training
//! can still be ranked and retrieved.
//!
//! Modules:
//!
//! - [`nn`]: matrices, layers, masked softmax, gradient checking.
//! - [`heads`]: the shared trunk and the three heads with hand-written backward passes.
//! - [`optim`]: momentum SGD with weight decay and polynomial learning-rate decay.
//! - [`data`]: vocabulary pruning, uploader-disjoint splitting, feature files, synthetic data.
//! - [`eval`]: top-k accuracy, per-pair gap reports, retrieval.
//! - [`checkpoint`]: text checkpoints.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod heads;
pub mod nn;
pub mod optim;

pub use error::{Error, Result};
