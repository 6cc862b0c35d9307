use teleport_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    /// Outputs are written before this is raised.
    #[error("not converged: {0}")]
    NonConvergence(String),

    #[error("output {path}: {message}")]
    Output { path: String, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_)
                | CoreError::NotChannelRepresentable(_)
                | CoreError::InsufficientInputs { .. }
                | CoreError::EmptyCounts => 2,
                CoreError::Csv(_) | CoreError::Json(_) | CoreError::Io(_) => 1,
                _ => 3,
            },
            CliError::Output { .. } => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let leak = CoreError::Leakage {
            population: 1e-3,
            budget: 1e-9,
        };
        assert_eq!(CliError::from(leak).exit_code(), 3);
        assert_eq!(CliError::NonConvergence("x".into()).exit_code(), 4);
        let io = std::io::Error::other("x");
        assert_eq!(CliError::from(io).exit_code(), 1);
    }
}
