use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("displacement {displacement_mm} mm outside [0, {limit_mm}] mm")]
    OutOfRange { displacement_mm: f64, limit_mm: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("densification: load {load_n:.4} N exceeds operational range {limit_n:.4} N{}", cell_suffix(.cell))]
    Densification {
        cell: Option<(usize, usize)>,
        load_n: f64,
        limit_n: f64,
    },

    #[error("unsupported topology {0:?}: only Gyroid lattices are calibrated")]
    UnsupportedTopology(crate::lattice::Topology),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("empty stream: {0}")]
    EmptyStream(&'static str),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("incomplete cycle: {0}")]
    IncompleteCycle(String),

    #[error("validation failed:\n{}", format_violations(.0))]
    Validation(Vec<String>),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("empty feasible space: {0}")]
    EmptySearchSpace(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors the CLI maps to the "validation" exit code.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Parse { .. } | Error::Calibration(_)
        )
    }
}

fn cell_suffix(cell: &Option<(usize, usize)>) -> String {
    match cell {
        Some((r, c)) => format!(" at cell ({r}, {c})"),
        None => String::new(),
    }
}

fn format_violations(v: &[String]) -> String {
    v.iter()
        .map(|s| format!("  - {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}
