use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Validation { path: String, msg: String },

    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },

    #[error("training did not converge after {sweeps} sweeps (eta {eta:.6})")]
    NotConverged { sweeps: usize, eta: f64 },

    #[error(transparent)]
    Core(#[from] usd_mplc::Error),

    #[error("{failed} of {total} sweep cells failed")]
    PartialSweep {
        failed: usize,
        total: usize,
        code: i32,
    },
}

impl CliError {
    /// 1 validation, 2 IO, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        use usd_mplc::Error as E;
        match self {
            CliError::Validation { .. } => 1,
            CliError::Io { .. } => 2,
            CliError::NotConverged { .. } => 3,
            CliError::PartialSweep { code, .. } => *code,
            CliError::Core(e) => match e {
                E::InvalidArgument(_)
                | E::GridMismatch(_)
                | E::DegenerateInput(_)
                | E::UndefinedRow(_) => 1,
                E::Io { .. } | E::Format { .. } => 2,
                E::NoSolution(_) | E::ConstructionViolated(_) => 3,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            msg: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        let v = CliError::Validation {
            path: "dimensions[0]".into(),
            msg: "x".into(),
        };
        assert_eq!(v.exit_code(), 1);
        assert_eq!(CliError::io("a", "b").exit_code(), 2);
        assert_eq!(
            CliError::NotConverged {
                sweeps: 1,
                eta: 0.5
            }
            .exit_code(),
            3
        );
        let fmt = usd_mplc::Error::Format {
            path: "m.pgm".into(),
            reason: "bad".into(),
        };
        assert_eq!(CliError::from(fmt).exit_code(), 2);
        assert_eq!(
            CliError::from(usd_mplc::Error::UndefinedRow(0)).exit_code(),
            1
        );
        assert_eq!(
            CliError::from(usd_mplc::Error::NoSolution("x".into())).exit_code(),
            3
        );
    }
}
