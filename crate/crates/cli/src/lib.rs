//! Command-line front end for the `qgraph` tool: JSON configuration, the
//! subcommand implementations and their CSV output.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_band, cmd_block, cmd_closed, cmd_eigenfunction, cmd_invariance, cmd_pointint, cmd_validate,
};
pub use config::{load_config, parse_config, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Domain(#[from] qgraph_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 for bad input, 2 when the computation itself is refused.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Io { .. } => 1,
            CliError::Domain(_) => 2,
        }
    }
}
