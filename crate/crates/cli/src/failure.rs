//! Process-level error type: every failure carries the exit code it maps to.
//!
//! The contract is small and stable: `0` success, `2` bad input (files,
//! config, command line), `3` bad checkpoint, `4` numeric failure inside the
//! model. Anything the kernel crate reports is folded into one of the last
//! three.

use std::fmt;

use kinescore_core::Error;

/// What went wrong, coarse enough to pick an exit code from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Unreadable, unparsable, or inconsistent inputs. Exit code 2.
    Input,
    /// A checkpoint that does not match the model it claims to hold. Exit code 3.
    Checkpoint,
    /// The math itself failed: shapes, non-finite values, empty reductions. Exit code 4.
    Numeric,
}

/// A failure ready to print on stderr and turn into an exit code.
#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Failure {
        Failure { category: Category::Input, message: message.into() }
    }

    pub fn checkpoint(message: impl Into<String>) -> Failure {
        Failure { category: Category::Checkpoint, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Failure {
        Failure { category: Category::Numeric, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category {
            Category::Input => 2,
            Category::Checkpoint => 3,
            Category::Numeric => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.category {
            Category::Input => "input",
            Category::Checkpoint => "checkpoint",
            Category::Numeric => "numeric",
        };
        write!(f, "error[{tag}] {}", self.message)
    }
}

impl std::error::Error for Failure {}

/// Kernel errors about data and configuration are the caller's fault (2);
/// errors raised mid-computation are numeric failures (4).
impl From<Error> for Failure {
    fn from(err: Error) -> Failure {
        let category = match err {
            Error::Parse { .. }
            | Error::Config(_)
            | Error::Topology(_)
            | Error::DegenerateSkeleton(_) => Category::Input,
            Error::Dim(_)
            | Error::DegenerateGraph(_)
            | Error::EmptyReduction(_)
            | Error::Numeric(_)
            | Error::Contract(_) => Category::Numeric,
        };
        Failure { category, message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

// ── tests ──────────────────────────────────────────────────────────────────
