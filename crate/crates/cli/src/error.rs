use serde::Serialize;
use stochflow::Error as CoreError;

/// Failures of a scenario run, each with a fixed exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{} warning(s) with --strict", .0.len())]
    Strict(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    status: &'static str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    message: String,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    warnings: &'a [String],
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Strict(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    fn status(&self) -> &'static str {
        match self {
            CliError::Schema { .. } => "schema-error",
            CliError::Numerical(_) => "numerical-error",
            CliError::Strict(_) => "strict-warnings",
            CliError::Io(_) => "io-error",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let (field, warnings) = match self {
            CliError::Schema { field, .. } => (Some(field.as_str()), &[][..]),
            CliError::Strict(w) => (None, w.as_slice()),
            _ => (None, &[][..]),
        };
        let report = ErrorReport {
            status: self.status(),
            exit_code: self.exit_code(),
            field,
            message: self.to_string(),
            warnings,
        };
        serde_json::to_string(&report).expect("error report serializes")
    }

    /// Core errors: bad parameters are schema problems under `prefix`,
    /// everything else is numerical.
    pub fn from_core(prefix: &str, e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { name, reason } => CliError::Schema {
                field: format!("{prefix}.{name}"),
                message: reason,
            },
            CoreError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::from_core("config", e)
    }
}
