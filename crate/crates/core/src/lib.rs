//! Multi-label training under class imbalance and label noise.
//!
//! A random sampler and a confidence-based minority sampler feed pairs of
//! instances into Mixup; after warm-up, every label is triaged each epoch as
//! clean, re-labeled or ambiguous from per-class loss mixtures and two-view
//! confidence, and the loss weights labels accordingly.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

// `!(x > 0.0)` style checks are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod datagen;
pub mod error;
pub mod io;
pub mod labelmgmt;
pub mod metrics;
pub mod mixing;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = model::ModelState<f64>;
pub type ModelF32 = model::ModelState<f32>;
pub type Dataset = datagen::Dataset<f64>;
pub type DatasetF32 = datagen::Dataset<f32>;
pub type Ledger = labelmgmt::LabelLedger<f64>;
pub type LedgerF32 = labelmgmt::LabelLedger<f32>;
pub type LossMixture = labelmgmt::LossMixture<f64>;
pub type Sampler = sampling::SamplerState<f64>;
pub type Checkpoint = io::Checkpoint<f64>;
pub type TrainOutcome = trainer::TrainOutcome<f64>;
