use thiserror::Error;

/// Errors raised by the localization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Relative residual sampled every few iterations.
        history: Vec<f64>,
    },

    #[error("missing {0} excitation grid")]
    MissingExcitation(&'static str),

    #[error("zero field sample in denominator at x = {x_nm} nm on {interface}")]
    ZeroDenominator { interface: String, x_nm: f64 },

    #[error("position x = {x_nm} nm outside profile coverage [0, {max_nm}] nm")]
    OutOfCoverage { x_nm: f64, max_nm: f64 },

    #[error("fit failed: no convergent start (best residual {best_residual_mhz:.3} MHz)")]
    FitFailed { best_residual_mhz: f64 },

    #[error("ramp plan: {0}")]
    RampPlan(String),

    #[error("schema violation in {file}: {field}")]
    Schema { file: String, field: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
