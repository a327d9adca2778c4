use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("energy {energy} is not below the potential at both grid endpoints")]
    EnergyNotBound { energy: f64 },

    #[error("grid too coarse: levels near E = {energy} cannot be separated")]
    GridTooCoarse { energy: f64 },

    #[error("missing level: node count jumped from {from} to {to}")]
    MissingLevel { from: usize, to: usize },

    #[error("level {level} lies above the top of the bound spectrum ({max_level} levels)")]
    LevelOutOfRange { level: usize, max_level: usize },

    #[error("trajectory overflow in realization {realization} at t = {time}: |c| = {magnitude:e}")]
    Overflow {
        realization: usize,
        time: f64,
        magnitude: f64,
    },

    #[error("reference solution not converged in Fock cutoff: relative change {change:e}")]
    NotConverged { change: f64 },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
