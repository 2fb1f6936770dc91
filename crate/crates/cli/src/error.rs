use std::fmt;

use serde_json::json;

/// Failure classes that map onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable config, or a parameter that fails validation (exit 2).
    Usage(String),
    /// Anything that goes wrong while running a valid command (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        json!({ "level": "error", "kind": self.kind(), "message": self.to_string() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        // core validation failures are usage errors wherever they surface
        if let Some(objsal::Error::Config(m)) = e.downcast_ref::<objsal::Error>() {
            return CliError::Usage(m.clone());
        }
        CliError::Runtime(e)
    }
}

impl From<objsal::Error> for CliError {
    fn from(e: objsal::Error) -> Self {
        CliError::from(anyhow::Error::new(e))
    }
}

/// Reports a per-image problem on stderr without stopping the batch.
pub fn warn_image(kind: &str, image: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "level": "warn", "kind": kind, "image": image, "message": message })
    );
}
