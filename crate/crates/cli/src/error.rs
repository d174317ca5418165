use std::path::PathBuf;

use ntkdip_core::train::TrainError;
use thiserror::Error;

/// Logs of a training run that hit a non-finite loss.
#[derive(Debug)]
pub struct PartialRun {
    pub label: String,
    pub iter: usize,
    pub csv: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("numerical failure: {message}")]
    Numerical { message: String, partial: Option<PartialRun> },
    #[error(transparent)]
    Core(ntkdip_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for config problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn from_train(label: &str, e: TrainError<f64>) -> Self {
        match e {
            TrainError::Setup(e) => e.into(),
            TrainError::Aborted { iter, partial } => {
                let mut csv = Vec::new();
                let _ = partial.write_csv(&mut csv);
                CliError::Numerical {
                    message: format!("{label}: non-finite loss at iteration {iter}"),
                    partial: Some(PartialRun {
                        label: label.to_string(),
                        iter,
                        csv,
                    }),
                }
            }
        }
    }
}

impl From<ntkdip_core::Error> for CliError {
    fn from(e: ntkdip_core::Error) -> Self {
        match e {
            ntkdip_core::Error::NonFinite { .. } => CliError::Numerical {
                message: e.to_string(),
                partial: None,
            },
            other => CliError::Core(other),
        }
    }
}
