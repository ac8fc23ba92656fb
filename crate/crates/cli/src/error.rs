use serde::Serialize;

/// A failure with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {message}")]
    Data { message: String, row: Option<usize>, column: Option<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data { message: message.into(), row: None, column: None }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data { .. } => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// Machine-readable error document.
    pub fn document(&self) -> ErrorDocument {
        let (row, column) = match self {
            CliError::Data { row, column, .. } => (*row, column.clone()),
            _ => (None, None),
        };
        ErrorDocument {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                exit_code: self.exit_code(),
                row,
                column,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorDocument {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl From<warpfit::Error> for CliError {
    fn from(e: warpfit::Error) -> Self {
        match e {
            warpfit::Error::InvalidArgument(_) | warpfit::Error::IllPosed(_) => CliError::Config(e.to_string()),
            warpfit::Error::Data(_) | warpfit::Error::Domain { .. } => CliError::data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let code = |e: warpfit::Error| CliError::from(e).exit_code();
        assert_eq!(code(warpfit::Error::InvalidArgument("p".into())), 2);
        assert_eq!(code(warpfit::Error::IllPosed("k".into())), 2);
        assert_eq!(code(warpfit::Error::Data("x".into())), 3);
        assert_eq!(code(warpfit::Error::Domain { name: "t", value: 2.0 }), 3);
        assert_eq!(code(warpfit::Error::OptimizationFailed("s".into())), 4);
        assert_eq!(code(warpfit::Error::Numerical("n".into())), 4);
    }

    #[test]
    fn document_omits_absent_location() {
        let doc = serde_json::to_value(CliError::Numerical("nan".into()).document()).unwrap();
        assert_eq!(doc["error"]["kind"], "numerical");
        assert!(doc["error"].get("row").is_none());
    }
}
