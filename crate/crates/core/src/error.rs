use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid contract: {0}")]
    InvalidContract(String),

    #[error("Riccati denominator vanishes at t = {t}")]
    DegenerateRiccati { t: f64 },

    #[error("closed form not available in this regime: {0}")]
    InvalidRegime(String),

    #[error("zero pivot in tridiagonal elimination at row {row}")]
    SingularTridiagonal { row: usize },

    #[error("non-finite value in surface at time step {step}")]
    NonFinite { step: usize },

    #[error("utility blend overflowed at time step {step}")]
    Overflow { step: usize },

    #[error("TWAP transform requires a zero risk-free rate (got r = {rate})")]
    RequiresZeroRate { rate: f64 },

    #[error("invalid regulatory spec: {0}")]
    InvalidRegulatory(String),

    #[error("path left the grid on {clamped} of {steps} steps")]
    OutOfGrid { clamped: usize, steps: usize },

    #[error("invalid simulation config: {0}")]
    InvalidSimulation(String),

    #[error("surface decode failed: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
