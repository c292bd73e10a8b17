//! Process exit codes: 0 success, 2 usage, 3 data integrity, 4 numeric
//! failure, 1 anything else.

use relwalk_core::Error;

pub const USAGE: i32 = 2;
pub const INTEGRITY: i32 = 3;
pub const NUMERIC: i32 = 4;

/// Data that contradicts the schema, a model or a manifest.
#[derive(Debug)]
pub struct DataError(pub String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

/// Invalid command-line usage detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A post-hoc check of a numerical result failed.
#[derive(Debug)]
pub struct VerificationError(pub String);

impl std::fmt::Display for VerificationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationError {}

pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            if e.is_integrity() {
                return INTEGRITY;
            }
            if e.is_numeric() {
                return NUMERIC;
            }
        }
        if cause.is::<DataError>() {
            return INTEGRITY;
        }
        if cause.is::<VerificationError>() {
            return NUMERIC;
        }
        if cause.is::<UsageError>() {
            return USAGE;
        }
    }
    1
}
