use thiserror::Error;

/// Failures of a CLI run, grouped by the exit status they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration, 3 for data, 4 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ivqr_core::Error> for CliError {
    fn from(e: ivqr_core::Error) -> Self {
        use ivqr_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Domain(_) | E::Dimension(_) | E::UnsupportedShape(_) | E::InvalidDgp(_) => CliError::Config(msg),
            E::SingularDesign(_)
            | E::InsufficientCellData { .. }
            | E::NotDiscrete { .. }
            | E::EmptyCell(_) => CliError::Data(msg),
            E::Convergence { .. }
            | E::NearSingularCovariance(_)
            | E::EstimationFailed(_)
            | E::UnreliableVariance { .. }
            | E::Equilibrium { .. } => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
