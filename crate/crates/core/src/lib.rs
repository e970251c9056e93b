//! Object location mining.
//!
//! Convolutional feature maps are turned into a transaction database (one
//! transaction per channel, one item per strongly activated grid position).
//! Frequent positions are mined with Apriori, merged by spatial continuity
//! into a support map, and the support map yields object boxes, saliency
//! maps and part locations. [`metrics`] and [`eval`] score the results.

pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod localization;
pub mod metrics;
pub mod miner;
pub mod parts;
pub mod pgm;
pub mod pipeline;
pub mod tensor;
pub mod transactions;

pub use error::{Error, Result};
