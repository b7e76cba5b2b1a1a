use serde::Serialize;

/// Error reported as one JSON object on standard error.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub error: String,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { error: kind.into(), message: message.into() }
    }
}

impl From<fkqho::Error> for Failure {
    fn from(e: fkqho::Error) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new("parse", e.to_string())
    }
}
