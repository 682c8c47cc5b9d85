//! File formats, training loop and command implementations for GraphMLP
//! 2D-to-3D pose lifting. The numerical core lives in `graphmlp_core`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod layout;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use graphmlp_core as core;
