//! Collaborative filtering with a reflective-imputation autoencoder.
//!
//! The model encodes each interaction vector through a shared projection,
//! reflects the projection back to fill unobserved positions with decayed
//! estimates, and trains a masked reconstruction objective over the observed
//! entries only. Three reflection variants are supported (tied transpose,
//! independent reflector, implicit latent map), plus a plain autoencoder and
//! a neighbor-imputation baseline for ablations.
//!
//! Modules follow the pipeline: [`data`] ingests rating files and builds
//! splits, [`model`] defines parameters and reference forward passes,
//! [`kernel`] holds the batched fast paths, [`training`] fits by masked
//! backprop, [`eval`] scores rating and ranking tasks, [`diagnostics`]
//! numerically audits the claimed properties, and [`checkpoint`] persists
//! models.

pub mod scalar;
pub mod numerics;
pub mod data;
pub mod model;
pub mod kernel;
pub mod training;
pub mod eval;
pub mod diagnostics;
pub mod checkpoint;
pub mod synth;

pub use scalar::Scalar;

/// Double-precision aliases; the CLI and the checkpoint format use these.
pub type DenseMatrix64 = numerics::DenseMatrix<f64>;
pub type DenseVector64 = numerics::DenseVector<f64>;
pub type SparseVector64 = numerics::SparseVector<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type HyperParams64 = model::HyperParams<f64>;
