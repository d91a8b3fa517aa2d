//! Multi-agent trajectory imputation.
//!
//! A set-attention / bidirectional-LSTM network produces an initial estimate
//! of every agent's position, velocity and acceleration. Positions are also
//! re-derived by integrating the predicted derivatives forward and backward
//! from each gap's observed endpoints, and a learned per-frame convex weighting
//! blends the three estimates into the final imputation.

pub mod analytics;
pub mod dap;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod masking;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{MidasError, Result};
