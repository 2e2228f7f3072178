use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] cohsense::Error),
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
