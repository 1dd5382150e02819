use thiserror::Error;

/// Unified error type for mesh construction, assembly, solves, and the CLI.
#[derive(Debug, Error)]
pub enum QgeError {
    #[error("invalid mesh request: {0}")]
    InvalidMesh(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("element basis system is singular on cell {cell}")]
    SingularElement { cell: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton did not converge within {max_iters} iterations (last update norm {last_update:.3e})")]
    NewtonDiverged { max_iters: usize, last_update: f64 },

    #[error(
        "time step {step} (t = {t:.6}) failed to converge after {iters} Newton iterations: \
         update norm {last_update:.3e}, residual norm {residual_norm:.3e}"
    )]
    StepDiverged {
        step: usize,
        t: f64,
        iters: usize,
        last_update: f64,
        residual_norm: f64,
    },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl QgeError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        QgeError::Io { path: path.into(), source }
    }
}
