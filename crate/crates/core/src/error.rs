use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{name} = {value} lies outside [0, 1]")]
    Domain { name: &'static str, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("ill-posed template configuration: {0}")]
    IllPosed(String),

    #[error("template has {found} stationary points, expected {expected}")]
    ExtraStationaryPoints { expected: usize, found: usize },

    #[error("optimization failed from every start: {0}")]
    OptimizationFailed(String),

    #[error("degenerate interval: {0}")]
    DegenerateInterval(String),

    #[error("data error: {0}")]
    Data(String),
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { name, value })
    }
}
