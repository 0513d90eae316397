use serde_json::json;
use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error{}: {message}", at_line(*.line))]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("unknown key `{key}`{}{}", at_line(*.line), suggest(.suggestion))]
    UnknownKey {
        key: String,
        line: Option<usize>,
        suggestion: Option<String>,
    },

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error(transparent)]
    Model(#[from] tdadc::Error),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

fn suggest(s: &Option<String>) -> String {
    s.as_ref()
        .map(|k| format!(" (did you mean `{k}`?)"))
        .unwrap_or_default()
}

impl HarnessError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<String>, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Parse { .. } => "parse",
            HarnessError::UnknownKey { .. } => "unknown_key",
            HarnessError::Invalid { .. } => "validation",
            HarnessError::Model(e) => match e {
                tdadc::Error::Config { .. } => "validation",
                tdadc::Error::Statistics(_) | tdadc::Error::NoSignal { .. } => "statistics",
                tdadc::Error::RangeExceeded { .. } | tdadc::Error::PolaritySequence { .. } => {
                    "simulation"
                }
            },
            HarnessError::Io { .. } => "io",
        }
    }

    /// 2 configuration, 3 statistics, 4 simulation input, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "statistics" => 3,
            "simulation" => 4,
            "io" => 5,
            _ => 2,
        }
    }

    /// The machine-readable record printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        });
        let e = &mut v["error"];
        match self {
            HarnessError::Parse { line, .. } => e["line"] = json!(line),
            HarnessError::UnknownKey {
                key,
                line,
                suggestion,
            } => {
                e["key"] = json!(key);
                e["line"] = json!(line);
                e["suggestion"] = json!(suggestion);
            }
            HarnessError::Invalid { field, .. } => e["field"] = json!(field),
            HarnessError::Model(tdadc::Error::Config { field, .. }) => e["field"] = json!(field),
            _ => {}
        }
        v
    }
}
