use std::fmt;

use recsel_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage,
    Data,
    Internal,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Usage => 1,
            ExitKind::Data => 2,
            ExitKind::Internal => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub exit: ExitKind,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(exit: ExitKind, kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            exit,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, "usage", message)
    }

    pub fn data(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(ExitKind::Data, kind, message)
    }

    /// Attaches context (usually a dataset or file) to the message.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    /// The one-line form printed on stderr.
    pub fn line(&self) -> String {
        let msg: String = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .replace('\\', "\\\\")
            .replace('"', "\\\"");
        format!("error kind={} msg=\"{msg}\"", self.kind)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        // these only surface when the pipeline itself is inconsistent
        let exit = match e {
            Error::UnknownUser(_)
            | Error::EmptyRelevantSet
            | Error::DimensionMismatch(_)
            | Error::LengthMismatch { .. }
            | Error::MalformedRanking(_) => ExitKind::Internal,
            _ => ExitKind::Data,
        };
        Self::new(exit, e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}
