//! Runner, oracle export and comparison behind the `wlqmc` binary.

pub mod compare;
pub mod config;
pub mod csv;
pub mod report;
pub mod run;

/// Process exit statuses of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const COMPARE_FAILED: i32 = 1;
    /// Unparseable or invalid configuration, or bad arguments.
    pub const INVALID: i32 = 2;
    pub const WEIGHT_VIOLATION: i32 = 3;
    /// I/O, checkpoint, schema or oracle-size errors.
    pub const RUNTIME: i32 = 4;
    /// Stopped by SIGTERM or SIGINT after writing a checkpoint.
    pub const INTERRUPTED: i32 = 5;
}
