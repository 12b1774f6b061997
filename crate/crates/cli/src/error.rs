use serde_json::{json, Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Failure reported as `{code, message, context}` on stderr.
#[derive(Debug, Clone)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub context: Map<String, Value>,
    pub exit: i32,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>, exit: i32) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            context: Map::new(),
            exit,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message, EXIT_USAGE)
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display, exit: i32) -> Self {
        Self::new("io", format!("{}: {err}", path.display()), exit).with("path", path.display().to_string())
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.into(), value.into());
        self
    }

    pub fn to_json(&self) -> Value {
        json!({
            "code": self.code,
            "message": self.message,
            "context": self.context,
        })
    }
}

/// Bad input maps to a usage error, anything that went wrong while computing
/// maps to a check failure.
fn exit_for(code: &str) -> i32 {
    match code {
        "parse" | "invalid_instance" | "invalid_window" | "out_of_range" | "irrationality" | "grid"
        | "empty_minor_arc" | "mismatch" | "infeasible" | "unbounded" => EXIT_USAGE,
        _ => EXIT_CHECK,
    }
}

impl From<dhlab_core::Error> for CliError {
    fn from(e: dhlab_core::Error) -> Self {
        let code = e.code();
        CliError::new(code, e.to_string(), exit_for(code))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
