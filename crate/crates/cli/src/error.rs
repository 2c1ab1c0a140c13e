use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

/// Failure category; each maps to its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Incompatible,
    Refused,
    Numeric,
    Io,
}

impl Category {
    pub fn code(self) -> u8 {
        match self {
            Category::Config => 3,
            Category::Data => 4,
            Category::Incompatible => 5,
            Category::Refused => 6,
            Category::Numeric => 7,
            Category::Io => 8,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Data => "data",
            Category::Incompatible => "incompatible",
            Category::Refused => "refused",
            Category::Numeric => "numeric",
            Category::Io => "io",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Category::Data, message)
    }

    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Self::new(Category::Io, format!("{}: {err}", path.into().display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.category.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category.label(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<earsep_core::Error> for CliError {
    fn from(e: earsep_core::Error) -> Self {
        use earsep_core::Error as E;
        let category = match &e {
            E::Config(_) => Category::Config,
            E::Shape { .. } | E::SampleRate { .. } | E::Checkpoint(_) => Category::Incompatible,
            E::NonFinite(_) => Category::Numeric,
            E::Io { .. } => Category::Io,
            E::InvalidInput(_) | E::TooShort { .. } | E::Dataset(_) | E::Wav { .. } | E::Json(_) => Category::Data,
        };
        Self::new(category, e.to_string())
    }
}
