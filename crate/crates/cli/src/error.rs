use serde::Serialize;

/// A failure reported as one JSON line on stderr.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub stage: &'static str,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(stage: &'static str, message: impl Into<String>) -> Self {
        CliError {
            stage,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            stage: "cli",
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn runtime(stage: &'static str, kind: &'static str, err: impl std::fmt::Display) -> Self {
        CliError {
            stage,
            kind,
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "config" | "usage" => 2,
            _ => 1,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"stage\":\"{}\"}}", self.stage))
    }
}
