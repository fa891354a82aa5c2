//! Subcommands of the `opaque-games` binary and the HTTP session service.

pub mod commands;
pub mod service;

pub use commands::{
    cmd_classify, cmd_oracle, cmd_play, cmd_solve, cmd_sweep, ClassifyRecord, OracleLine, OracleReport, Overrides,
};
pub use service::{router, serve, AppState};
