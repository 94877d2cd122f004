//! Spatial-temporal hypergraph self-supervised learning for sparse,
//! grid-based event forecasting.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numeric part
//! of the model: a small reverse-mode differentiation engine, the local
//! convolutional encoders, hypergraph propagation, the infomax and
//! contrastive objectives, the Adam training loop and the evaluation
//! protocol. File formats, CSV parsing and the command-line driver live in
//! the companion `sthsl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod array;
pub mod config;
pub mod data;
pub mod encoder_local;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod head;
pub mod hypergraph;
pub mod params;
pub mod rng;
pub mod ssl;
pub mod tape;
pub mod trainer;

pub use array::DenseArray;
pub use config::{Ablation, LossWeights, ModelConfig, TrainConfig};
pub use data::{CrimeTensor, GridSpec, Phase, SplitPlan};
pub use error::{Error, Result};
pub use params::ModelParams;
pub use rng::Rng;
pub use tape::{Tape, Var};
