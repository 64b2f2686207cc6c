//! Per-attempt outcomes and HTTP status classification.

use alloc::string::String;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum AttemptOutcome {
    Success(Value),
    RetryableFailure(String),
    FatalFailure(String),
}

impl AttemptOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, AttemptOutcome::Success(_))
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            AttemptOutcome::Success(_) => None,
            AttemptOutcome::RetryableFailure(r) | AttemptOutcome::FatalFailure(r) => Some(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusClass {
    Success,
    Retryable,
    Fatal,
}

/// Maps an HTTP status to how the attempt should be treated.
///
/// 2xx succeed; 408, 429 and every 5xx are retried; all other statuses
/// (including 400, 401, 403, 404 and 422) are final.
pub fn classify_status(status: u16) -> StatusClass {
    match status {
        200..=299 => StatusClass::Success,
        408 | 429 | 500..=599 => StatusClass::Retryable,
        _ => StatusClass::Fatal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_table() {
        for s in [429, 500, 502, 503, 504] {
            assert_eq!(classify_status(s), StatusClass::Retryable, "{s}");
        }
        for s in [400, 401, 403, 404, 422] {
            assert_eq!(classify_status(s), StatusClass::Fatal, "{s}");
        }
        assert_eq!(classify_status(200), StatusClass::Success);
        assert_eq!(classify_status(301), StatusClass::Fatal);
        assert_eq!(classify_status(0), StatusClass::Fatal);
    }
}
