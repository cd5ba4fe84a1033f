use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite state at step {step}, path {path}, mode {mode}")]
    ForwardBlowUp { step: usize, path: usize, mode: usize },

    #[error("riccati sweep lost {property} at node {node} (defect {defect:e})")]
    RiccatiDefect {
        property: &'static str,
        node: usize,
        defect: f64,
    },

    #[error("riccati matrix-fraction denominator singular at node {node}; reduce the step")]
    SingularDenominator { node: usize },

    #[error("affine fixed point failed to contract on sub-interval of {delta_steps} steps (update {update:e})")]
    NonContraction { delta_steps: usize, update: f64 },

    #[error("picard increment became non-finite at theta={theta} iteration {iteration}")]
    PicardNaN { theta: f64, iteration: usize },

    #[error("bridge stage failed at theta={theta} after {halvings} step halvings (last increment {last_increment:e})")]
    BridgeStage {
        theta: f64,
        halvings: usize,
        last_increment: f64,
    },

    #[error("unknown scenario `{name}`; available: {available}")]
    UnknownScenario { name: String, available: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
