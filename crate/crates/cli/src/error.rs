use std::fmt;

use rigdepth_core::cvt::CvtError;
use rigdepth_core::evalmetrics::EvalError;
use rigdepth_core::geometry::GeometryError;
use rigdepth_core::io::IoError;
use rigdepth_core::photometric::PhotometricError;
use rigdepth_core::sfm::SfmError;
use rigdepth_core::synth::SynthError;

/// Failure classes with fixed process exit codes: bad invocations exit 1,
/// unreadable or inconsistent inputs exit 2, and failed numeric checks exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Check(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            // A structurally unusable rig (too few cameras, bad adjacency) is
            // something the caller asked for, not a decoding failure.
            IoError::Geometry(GeometryError::InvalidRig(msg)) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidRig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SfmError> for CliError {
    fn from(e: SfmError) -> Self {
        match e {
            SfmError::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PhotometricError> for CliError {
    fn from(e: PhotometricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CvtError> for CliError {
    fn from(e: CvtError) -> Self {
        match e {
            CvtError::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
