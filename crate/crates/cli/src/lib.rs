//! Library side of `bridgectl`: configuration, command dispatch and error reporting.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub use commands::{run_command, Command, Outcome};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("environment: {0}")]
    Env(String),

    #[error(transparent)]
    Core(#[from] heatbridge::Error),
}

impl CliError {
    /// 2 for anything wrong with the inputs, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse(_) | CliError::Invalid(_) | CliError::Env(_) => 2,
            CliError::Core(heatbridge::Error::UnknownScenario { .. } | heatbridge::Error::Config(_)) => 2,
            CliError::Core(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use heatbridge::Error as E;
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse(_) => "config_parse",
            CliError::Invalid(_) => "config_invalid",
            CliError::Env(_) => "environment",
            CliError::Core(e) => match e {
                E::Config(_) => "config",
                E::Dimension { .. } => "dimension",
                E::ForwardBlowUp { .. } => "forward_blow_up",
                E::RiccatiDefect { .. } => "riccati_defect",
                E::SingularDenominator { .. } => "singular_denominator",
                E::NonContraction { .. } => "non_contraction",
                E::PicardNaN { .. } => "picard_nan",
                E::BridgeStage { .. } => "bridge_stage",
                E::UnknownScenario { .. } => "unknown_scenario",
                E::Io(_) | E::Csv(_) | E::Json(_) => "output",
            },
        }
    }

    pub fn report(&self) -> FailureReport {
        FailureReport {
            status: "error",
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            violations: match self {
                CliError::Invalid(v) => v.clone(),
                _ => Vec::new(),
            },
        }
    }
}

/// Body of `failure.json`.
#[derive(Debug, Serialize)]
pub struct FailureReport {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
    pub violations: Vec<String>,
}

/// Sizes the global rayon pool from `BRIDGECTL_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("BRIDGECTL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Env(format!("BRIDGECTL_THREADS must be a positive integer (got `{value}`)")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Env(e.to_string()))
}
