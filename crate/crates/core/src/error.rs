use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("layer {layer}: {detail}")]
    LayerShape { layer: usize, detail: String },
    #[error("matrix must be non-empty, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("svd did not converge for a {rows}x{cols} matrix after {sweeps} sweeps")]
    SvdNoConvergence { rows: usize, cols: usize, sweeps: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target infeasible for final activation: {count} negative entries, first at ({row}, {col}) = {value}")]
    InfeasibleTarget { count: usize, row: usize, col: usize, value: f64 },
    #[error("training fault: {0}")]
    TrainingFault(String),
    #[error("ingestion error at byte {offset}: {detail}")]
    Ingestion { offset: usize, detail: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
