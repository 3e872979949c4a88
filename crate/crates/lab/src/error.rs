use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERDICT_MISMATCH: i32 = 2;
    pub const TOLERANCE: i32 = 3;
    pub const INPUT: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] feller_core::Error),
    #[error("{0}")]
    VerdictMismatch(String),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<&'a str>,
    exit_code: i32,
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(feller_core::Error::Tolerance { .. }) => exit::TOLERANCE,
            Self::VerdictMismatch(_) => exit::VERDICT_MISMATCH,
            _ => exit::INPUT,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Schema { .. } => "schema",
            Self::Io { .. } => "io",
            Self::Usage(_) => "usage",
            Self::Core(feller_core::Error::Tolerance { .. }) => "tolerance",
            Self::Core(_) => "numeric",
            Self::VerdictMismatch(_) => "verdict_mismatch",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let msg = self.to_string();
        let path = match self {
            Self::Schema { path, .. } | Self::Io { path, .. } => Some(path.as_str()),
            _ => None,
        };
        let e = ErrorJson { error: &msg, kind: self.kind(), path, exit_code: self.exit_code() };
        serde_json::to_string(&e).expect("error json")
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> LabError {
    LabError::Io { path: path.display().to_string(), message: e.to_string() }
}
