//! Forecasting networks over windows of daily heat maps.
//!
//! Both variants end in the same head: `head_depth` tanh convolutions at
//! `hidden_channels`, then a zero-initialized convolution to two class logits.
//!
//! - `cnn` stacks the window's `W` maps as input channels and applies two
//!   tanh convolutions (`W -> embed -> hidden`).
//! - `cnn_lstm` embeds each day with a tanh convolution (`1 -> embed`) and
//!   runs a convolutional LSTM over the days; the head reads the final `h`.
//!
//! With `use_prior_residual` the head output is an offset on the prior
//! logits, otherwise it is used as the logits directly.

mod adam;
mod checkpoint;
mod network;
mod train;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use network::{window, ForwardCache, Network, SampleGrad, INPUT_SCALE};
pub use train::{predict_map, predict_days, train, Dataset, EpochLog, TrainConfig, TrainLog, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    Cnn,
    #[default]
    CnnLstm,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::CnnLstm => "cnn_lstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Variant::Cnn),
            "cnn_lstm" => Ok(Variant::CnnLstm),
            other => Err(Error::InvalidArgument(format!(
                "unknown model variant {other:?} (expected cnn or cnn_lstm)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub use_prior_residual: bool,
    pub embed_channels: usize,
    pub hidden_channels: usize,
    pub window_days: usize,
    pub kernel_size: usize,
    /// Hidden convolutions in the head before the output layer.
    pub head_depth: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::CnnLstm,
            use_prior_residual: true,
            embed_channels: 16,
            hidden_channels: 32,
            window_days: 30,
            kernel_size: 3,
            head_depth: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_channels == 0 || self.hidden_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        if self.window_days == 0 {
            return Err(Error::InvalidArgument("window_days must be >= 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}
