use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("stream inconsistent at t = {t}: {msg}")]
    Stream { t: u64, msg: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Calibration(_) => 3,
            CliError::Stream { .. } => 4,
        }
    }
}

impl From<isvd_chart::Error> for CliError {
    fn from(e: isvd_chart::Error) -> Self {
        match e {
            isvd_chart::Error::InvalidArgument(m) => CliError::Input(m),
            isvd_chart::Error::CalibrationFailure(m) => CliError::Calibration(m),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("csv: {e}"))
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{what} {}: line {}: {e}", path.display(), e.line())))
}
