//! Entire-chain cross-domain pre-ranking workbench.
//!
//! A cascade simulator produces matching-domain datasets with known
//! sample-selection bias; hand-differentiated models (two-tower, deep
//! baselines, ECM, ESMM, ECMM) are trained on them and scored with
//! ranking metrics over the full candidate sets.

pub mod error;
pub mod gates;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod sim;

pub use error::{Error, Result};
