//! Harness around the `lvann-core` index structures: file formats, planted
//! instance generation, recall and benchmark runs, the Monte Carlo filter
//! exponent estimator, and configuration.
//!
//! Everything here is std-side plumbing; the geometry and the Las Vegas
//! guarantees live in the core crate. The harness's job is to feed the core
//! honestly and report what happened without editorializing: strict-mode
//! misses abort with a contract error, subsampled-mode misses are counted.

pub mod config;
pub mod error;
pub mod estimator;
pub mod instance;
pub mod io;
pub mod recall;

pub use error::{FormatError, HarnessError};
