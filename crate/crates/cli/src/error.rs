use std::fmt;
use std::io;

use ksgdiffuse::Error;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    InvalidArgument,
    Io,
    Plugin,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::InvalidArgument => 2,
            FailureKind::Io => 3,
            FailureKind::Plugin => 4,
            FailureKind::Numerical => 5,
        }
    }
}

/// A command failure carrying its exit code class.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(FailureKind::InvalidArgument, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    /// One JSON object per line on stderr.
    pub fn diagnostic(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => FailureKind::InvalidArgument,
            Error::Format(_) | Error::Io(_) => FailureKind::Io,
            Error::Plugin(_) => FailureKind::Plugin,
            Error::NonFinite(_) => FailureKind::Numerical,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ksgdiffuse::denoiser::PluginError> for Failure {
    fn from(e: ksgdiffuse::denoiser::PluginError) -> Self {
        Self::new(FailureKind::Plugin, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::new(FailureKind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        let kind = if e.is_io() {
            FailureKind::Io
        } else {
            FailureKind::InvalidArgument
        };
        Self::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[cfg(test)]
mod tests {
    use super::*;
    use ksgdiffuse::denoiser::PluginError;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(Error::InvalidArgument("x".into())).exit_code(), 2);
        assert_eq!(Failure::from(Error::Format("x".into())).exit_code(), 3);
        assert_eq!(Failure::from(io::Error::other("x")).exit_code(), 3);
        assert_eq!(Failure::from(Error::Plugin(PluginError::Protocol("x".into()))).exit_code(), 4);
        assert_eq!(Failure::from(Error::NonFinite("x".into())).exit_code(), 5);
        assert_eq!(Failure::from(serde_json::from_str::<u8>("{").unwrap_err()).exit_code(), 2);
    }

    #[test]
    fn diagnostic_is_json() {
        let d = Failure::invalid("bad").context("mask").diagnostic();
        let v: serde_json::Value = serde_json::from_str(&d).unwrap();
        assert_eq!(v["error"], "invalid_argument");
        assert_eq!(v["exit_code"], 2);
        assert_eq!(v["message"], "mask: bad");
    }
}
