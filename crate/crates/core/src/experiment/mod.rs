//! End-to-end experiment harness: configuration, the training pipeline,
//! model bundles, evaluation and the three sweeps.
//!
//! Every stochastic stage draws from its own stream, seeded as
//! `seed ^ (k * 0x9E3779B97F4A7C15)` for the stage index `k` listed in
//! [`Stage`]. The synthetic scenario keeps its own seed so that changing
//! the model seed never changes the data.

mod bundle;
mod config;
mod pipeline;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use bundle::{BundleError, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use config::{AutoencoderConfig, DataSource, ExperimentConfig, Method, SoftmaxConfig, SweepConfig};
pub use pipeline::{
    fit_cdbn, fit_head, load_data, prepare, run_eval, run_train, train_model, CdbnStage, EvalReport, HeadStage,
    Prepared, StageTime, TrainRun, TrainTrace,
};
pub use sweep::{
    sweep_dims, sweep_layers, sweep_snr, CurveRow, DimRow, DimsSweep, LayerRow, SnrRow, ToCsv,
};

use crate::dataset::DatasetError;

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stage indices used for seed derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Split = 1,
    Cdbn = 2,
    AutoencoderInit = 3,
    Finetune = 4,
    Softmax = 5,
    Noise = 6,
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    seed ^ (stage as u64).wrapping_mul(SEED_STRIDE)
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Model(#[from] crate::Error),
}

impl ExperimentError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, ExperimentError::Model(crate::Error::NonFinite(_)))
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            ExperimentError::Io { .. }
                | ExperimentError::Dataset(DatasetError::Io { .. } | DatasetError::Read(_))
                | ExperimentError::Bundle(
                    BundleError::Io { .. }
                        | BundleError::BadMagic
                        | BundleError::Version { .. }
                        | BundleError::Truncated { .. }
                        | BundleError::Checksum
                        | BundleError::Malformed(_)
                )
        )
    }
}
