//! Losses, reverse-mode gradients, Adam and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod grad;
pub mod loss;
pub mod trainer;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader};
pub use grad::{batch_loss, compute_gradients};
pub use loss::{loss_coilwise, loss_recombined, LossKind};
pub use trainer::{train, train_samples, TrainConfig, TrainReport};

/// Storage precision of trained parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    /// Rounds to what this precision can store.
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?} (f32|f64)"))),
        }
    }
}
