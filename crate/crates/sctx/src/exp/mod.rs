//! Experiment orchestration: configs, run directories, the ablation grid,
//! and the probing command — everything the `sctx` binary drives.

mod ablation;
mod config;
mod gradcheck;
mod runner;

pub use ablation::{run_ablation, to_csv as ablation_csv, to_table as ablation_table, AblationRow};
pub use config::{AblationSection, EvalSection, ExperimentConfig, ProbeSection, TrainSection};
pub use gradcheck::{find_certified_seed, forward_kink_margin, grad_check_variant, KINK_GUARD};
pub use runner::{
    eval_model, load_run_model, run_eval, run_probe, run_train, RunPaths, TrainOutcome,
};

use crate::data::DataError;
use crate::model::ModelError;
use crate::tensor::TensorError;
use crate::train::TrainError;

/// Orchestration errors, classified for the CLI exit-code contract:
/// configuration and usage problems exit 1, runtime failures exit 2.
#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl ExpError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Parse { .. } | ExpError::Config(_) => 1,
            ExpError::Runtime(_) => 2,
        }
    }
}

impl From<TrainError> for ExpError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(msg) => ExpError::Config(msg),
            other => ExpError::Runtime(other.to_string()),
        }
    }
}

impl From<ModelError> for ExpError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(msg) => ExpError::Config(msg),
            other => ExpError::Runtime(other.to_string()),
        }
    }
}

impl From<TensorError> for ExpError {
    fn from(e: TensorError) -> Self {
        ExpError::Runtime(e.to_string())
    }
}

impl From<DataError> for ExpError {
    fn from(e: DataError) -> Self {
        ExpError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for ExpError {
    fn from(e: std::io::Error) -> Self {
        ExpError::Runtime(format!("i/o error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;

/// Version string of the experiment binary plus its content hash; runs
/// record both so results stay attributable to an exact build.
pub fn version_info() -> (String, String) {
    let version = format!("sctx {}", env!("CARGO_PKG_VERSION"));
    use sha2::{Digest, Sha256};
    let hash = hex_string(&Sha256::digest(version.as_bytes()));
    (version, hash)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
