use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("window out of bounds: {0}")]
    OutOfBounds(String),

    #[error("matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("MUSIC found {found} of {wanted} requested peaks")]
    UnderDetected { found: usize, wanted: usize, angles: Vec<f64> },

    #[error("transmit symbol at (symbol {symbol}, subcarrier {subcarrier}) is zero")]
    ZeroSymbol { symbol: usize, subcarrier: usize },

    #[error("scenario config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
