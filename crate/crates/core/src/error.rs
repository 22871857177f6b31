use thiserror::Error;

use crate::special_fn::SeriesResult;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: argument out of domain ({msg})")]
    Domain { op: &'static str, msg: String },

    #[error("{op}: series not converged after {} terms", partial.terms_used)]
    Truncation {
        op: &'static str,
        partial: SeriesResult,
    },

    #[error("{op}: truncation too small ({msg})")]
    TruncationTooSmall { op: &'static str, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{op}: numerical failure ({msg})")]
    Numerical { op: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain {
        op,
        msg: msg.into(),
    })
}

pub(crate) fn numerical<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Numerical {
        op,
        msg: msg.into(),
    })
}
