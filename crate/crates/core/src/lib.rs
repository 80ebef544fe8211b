//! Gridded mid-term earthquake forecasting.
//!
//! The pipeline turns an earthquake catalog into daily magnitude heat maps on
//! a regular grid, fits a per-cell historical prior, and trains a
//! convolutional LSTM whose two-class output is a residual on the prior
//! logits. Evaluation pools every valid (day, cell) pair and reports ROC AUC,
//! average precision and confusion counts over probability thresholds.
//!
//! Modules:
//! - [`catalog`]: parsing, grid projection, rasterization, labels and splits.
//! - [`rtl`]: Region-Time-Length seismicity features and their CSV export.
//! - [`prior`]: historical-frequency baseline and the residual head.
//! - [`nn`]: dense tensors and hand-written vector-Jacobian products.
//! - [`model`]: CNN / CNN+LSTM architectures, training and checkpoints.
//! - [`eval`]: imbalance-aware metrics.
//! - [`synth`]: synthetic catalogs with planted precursor structure.

pub mod binfmt;
pub mod catalog;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod prior;
pub mod rtl;
pub mod synth;

pub use error::{Error, Result};
