//! Stage-by-stage command-line driver for the ordinal scorecard pipeline.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod simulate;

use ordscore_core::ScoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Process exit status for an error: 1 for bad input, 2 for failures while
/// computing.
pub fn exit_code(err: &ScoreError) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}
