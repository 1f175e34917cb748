use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The coherent+chaotic model cannot represent the requested statistics
    /// (antibunched or super-thermal light).
    #[error("infeasible for the coherent+chaotic source model: {0}")]
    Infeasible(String),

    #[error("photon number {k} exceeds the detector cap n_max = {n_max}")]
    OutOfRange { k: usize, n_max: usize },

    #[error("normalized correlation is undefined for a zero mean photon number")]
    UndefinedCorrelation,

    #[error("numeric convergence failure: {0}")]
    Convergence(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
