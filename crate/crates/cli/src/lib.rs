//! File formats, configuration, convergence studies and the verification
//! suite behind the `mfg` command.

pub mod config;
pub mod error;
pub mod meshio;
pub mod oracle;
pub mod study;
pub mod verify;

pub use error::CliError;
