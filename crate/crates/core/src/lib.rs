//! GraphMLP core: a dependency-light implementation of the GraphMLP pose
//! lifting network.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure computation:
//!
//! - [`tensor`]: dense tensors, a reverse-mode autodiff tape and a
//!   finite-difference gradient checker.
//! - [`graph`]: skeleton topologies, edge-type partitions and normalized
//!   adjacency matrices.
//! - [`model`]: the network itself (all variants and GCN placements) plus
//!   closed-form parameter and FLOP accounting.
//! - [`metrics`]: the training loss, MPJPE, Procrustes-aligned MPJPE,
//!   PCK and AUC.
//! - [`data`]: pose samples, synthetic forward-kinematics data and flip
//!   augmentation.
//! - [`optim`]: Adam and the step-decay learning-rate schedule.
//!
//! File formats, the training loop and the CLI live in the `graphmlp` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
