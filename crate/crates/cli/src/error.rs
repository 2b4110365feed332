//! Harness error type and the process exit code mapping.

use std::fmt;
use std::path::PathBuf;

use lvann_core::CoreError;

/// What exactly is wrong with a file being read. Each variant has its own
/// stable code so fixtures can distinguish failure kinds without parsing
/// prose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatError {
    /// Leading magic bytes are not the expected tag.
    BadMagic,
    /// Recognized file, unsupported format version.
    BadVersion,
    /// A header field is out of range (for example a nonpositive vector
    /// dimension) or the header itself is cut off.
    BadHeader,
    /// A record's dimension disagrees with the first record's.
    DimMismatch,
    /// The payload ends before the header-announced length.
    Truncated,
    /// A value failed to parse or is non-finite.
    BadValue,
    /// Index sections are structurally inconsistent with each other.
    BadStructure,
}

impl FormatError {
    pub fn code(self) -> &'static str {
        match self {
            FormatError::BadMagic => "E201",
            FormatError::BadVersion => "E202",
            FormatError::BadHeader => "E203",
            FormatError::DimMismatch => "E204",
            FormatError::Truncated => "E205",
            FormatError::BadValue => "E206",
            FormatError::BadStructure => "E207",
        }
    }
}

/// Top-level harness error. The variants mirror the process exit codes:
/// contract violations exit 1, input problems exit 2, parameter
/// infeasibility exits 3.
#[derive(Debug)]
pub enum HarnessError {
    /// The Las Vegas contract was violated: a strict-mode query with a
    /// known neighbor came back empty.
    Contract(String),
    /// Bad invocation or unreadable input.
    Input(String),
    /// A file exists and was read, but its contents are malformed.
    Format { code: FormatError, path: PathBuf, detail: String },
    /// The requested parameter combination cannot be built.
    Infeasible(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Contract(_) => 1,
            HarnessError::Input(_) | HarnessError::Format { .. } => 2,
            HarnessError::Infeasible(_) => 3,
        }
    }

    pub fn format(code: FormatError, path: &std::path::Path, detail: impl Into<String>) -> Self {
        HarnessError::Format { code, path: path.to_path_buf(), detail: detail.into() }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Contract(m) => write!(f, "contract violation: {m}"),
            HarnessError::Input(m) => write!(f, "input error: {m}"),
            HarnessError::Format { code, path, detail } => {
                write!(f, "format error {} in {}: {detail}", code.code(), path.display())
            }
            HarnessError::Infeasible(m) => write!(f, "infeasible parameters: {m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            // The message already names the condition; avoid a doubled
            // "infeasible parameters:" prefix.
            CoreError::InfeasibleParams(m) => HarnessError::Infeasible(m.into()),
            // Everything else the core cannot build or certify at the
            // requested parameters, including caps and resample exhaustion.
            CoreError::VerificationFailed { .. }
            | CoreError::DecodeOverflow { .. }
            | CoreError::CollectionOverflow { .. }
            | CoreError::SplittingNotFound { .. }
            | CoreError::NoConvergence(_) => HarnessError::Infeasible(e.to_string()),
            other => HarnessError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Input(e.to_string())
    }
}
