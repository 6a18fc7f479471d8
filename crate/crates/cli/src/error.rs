// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DIVERGENCE: u8 = 3;
    pub const CERTIFICATE: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] pidsteer::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use pidsteer::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(E::InvalidInput(_) | E::Json(_)) => exit::CONFIG,
            CliError::Core(E::Divergence { .. }) => exit::DIVERGENCE,
            _ => exit::FAILURE,
        }
    }
}
