//! Error taxonomy shared across the crate.

use alloc::string::String;
use core::fmt;

/// Failure categories surfaced by the core APIs. Each variant carries a
/// human-readable detail string; shape errors always name both shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shape or axis mismatch in a tensor operation.
    Dim(String),
    /// Invalid configuration value (even kernel width, zero ratio, ...).
    Config(String),
    /// Malformed text input; `row` is 1-based within the offending buffer.
    Parse { row: usize, detail: String },
    /// Inconsistent joint graph (duplicate edge, disconnected, bad index).
    Topology(String),
    /// Skeleton data unusable for normalization (zero torso length, ...).
    DegenerateSkeleton(String),
    /// Graph unusable for normalization (zero-degree row).
    DegenerateGraph(String),
    /// Reduction over an empty axis.
    EmptyReduction(String),
    /// Non-finite value where a finite one is required.
    Numeric(String),
    /// API contract violation (non-scalar loss node, missing parameter, ...).
    Contract(String),
}

impl Error {
    pub fn dim(detail: impl Into<String>) -> Self {
        Error::Dim(detail.into())
    }

    /// Prefixes the detail message with the pipeline stage that failed.
    pub fn at_stage(self, stage: &str) -> Self {
        let tag = |d: String| {
            let mut s = String::from(stage);
            s.push_str(": ");
            s.push_str(&d);
            s
        };
        match self {
            Error::Dim(d) => Error::Dim(tag(d)),
            Error::Config(d) => Error::Config(tag(d)),
            Error::Parse { row, detail } => Error::Parse { row, detail: tag(detail) },
            Error::Topology(d) => Error::Topology(tag(d)),
            Error::DegenerateSkeleton(d) => Error::DegenerateSkeleton(tag(d)),
            Error::DegenerateGraph(d) => Error::DegenerateGraph(tag(d)),
            Error::EmptyReduction(d) => Error::EmptyReduction(tag(d)),
            Error::Numeric(d) => Error::Numeric(tag(d)),
            Error::Contract(d) => Error::Contract(tag(d)),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dim(d) => write!(f, "dimension error: {d}"),
            Error::Config(d) => write!(f, "config error: {d}"),
            Error::Parse { row, detail } => write!(f, "parse error at row {row}: {detail}"),
            Error::Topology(d) => write!(f, "topology error: {d}"),
            Error::DegenerateSkeleton(d) => write!(f, "degenerate skeleton: {d}"),
            Error::DegenerateGraph(d) => write!(f, "degenerate graph: {d}"),
            Error::EmptyReduction(d) => write!(f, "empty reduction: {d}"),
            Error::Numeric(d) => write!(f, "numeric error: {d}"),
            Error::Contract(d) => write!(f, "contract violation: {d}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
