use std::fmt;
use std::path::{Path, PathBuf};

use crate::taxonomy::Dataset;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug)]
pub enum Error {
    Io { path: PathBuf, source: std::io::Error },
    Parse(String),
    Invalid(String),
    UnknownLabel { dataset: Dataset, label: String },
    MissingDataset { level: u8, dataset: Dataset },
    BadLevel(u8),
    BadFractions(String),
    EmptyManifest,
    IdMismatch(String),
    InsufficientRecords { dataset: Dataset, have: usize, need: usize },
    DegenerateRow(usize),
    NonFinite { step: usize },
    TooFewGroups(String),
    Image(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// True when the error came from a file that does not exist.
    pub fn is_not_found(&self) -> bool {
        matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::UnknownLabel { dataset, label } => {
                write!(f, "unknown label {label:?} for dataset {dataset}")
            }
            Error::MissingDataset { level, dataset } => {
                write!(f, "meta{level} requires dataset {dataset}")
            }
            Error::BadLevel(level) => write!(f, "meta level must be 2, 3 or 4, got {level}"),
            Error::BadFractions(msg) => write!(f, "bad split fractions: {msg}"),
            Error::EmptyManifest => f.write_str("manifest is empty"),
            Error::IdMismatch(msg) => write!(f, "prediction/truth id mismatch: {msg}"),
            Error::InsufficientRecords { dataset, have, need } => {
                write!(f, "dataset {dataset} has {have} records, {need} needed")
            }
            Error::DegenerateRow(row) => {
                write!(f, "bandwidth search did not converge for row {row}")
            }
            Error::NonFinite { step } => write!(f, "non-finite embedding at step {step}"),
            Error::TooFewGroups(msg) => write!(f, "too few groups: {msg}"),
            Error::Image(msg) => write!(f, "image error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
