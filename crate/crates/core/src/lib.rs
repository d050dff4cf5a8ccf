//! Lateral motion state estimation of a leader propeller from the pressure
//! readings of a cylindrical artificial lateral line.
//!
//! The crate covers the full pipeline: a synthetic wake surrogate
//! ([`wake`]), windowed dataset construction ([`dataset`]), a small
//! reverse-mode tensor core ([`tensor`]), the CNN-BiLSTM multi-output
//! estimator ([`estimator`]) and whale-optimization task-weight tuning
//! ([`woa`]).

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod hashing;
pub mod tensor;
pub mod wake;
pub mod woa;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
