//! FSC-Net: dual-network continual learning.
//!
//! A fast network adapts to each task in a sequence while a slow
//! consolidation network distills and replays its way to stable long-term
//! retention. The crate contains everything needed to reproduce the
//! Split-MNIST / Split-CIFAR-10 experiments end to end: a minimal tensor
//! autodiff core, dataset loaders, both networks, the training protocol,
//! four baselines, retention/forgetting metrics, and paired-t statistics.

pub mod baselines;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod protocol;
pub mod records;
pub mod replay;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{FscError, Result};
pub use rng::Rng;
pub use tensor::{Tape, Tensor, Var};
