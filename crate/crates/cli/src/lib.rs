//! Subcommands of the `combnet` binary, usable as a library.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 configuration error.

pub mod bench;
pub mod count;
pub mod infer;
pub mod verify;

use std::path::Path;

use combnet_core::config::Config;
use combnet_core::graph::{build_graph, GraphSpec, WeightFileError};

/// Seed used when neither `--seed` nor `COMBNET_SEED` is given.
pub const DEFAULT_SEED: u64 = 7;
pub const SEED_ENV: &str = "COMBNET_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl From<combnet_core::Error> for CliError {
    fn from(e: combnet_core::Error) -> Self {
        use combnet_core::Error as E;
        match e {
            E::Config(m) | E::Unsupported(m) => CliError::Config(m),
            E::WeightFile(w) => weight_file_error(&w),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<WeightFileError> for CliError {
    fn from(e: WeightFileError) -> Self {
        weight_file_error(&e)
    }
}

fn weight_file_error(e: &WeightFileError) -> CliError {
    CliError::Input(format!("weight file [W{:02}]: {e}", e.code()))
}

pub type CliResult<T> = Result<T, CliError>;

/// `COMBNET_SEED` wins over the flag; the flag wins over the default.
pub fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag.unwrap_or(DEFAULT_SEED)),
    }
}

/// The given config file, or the built-in reference configuration.
pub fn load_config(path: Option<&Path>) -> CliResult<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

pub fn graph_for(cfg: &Config) -> CliResult<GraphSpec> {
    Ok(build_graph(&cfg.network)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes() {
        assert_eq!(CliError::Verification(String::new()).exit_code(), 1);
        let e: CliError = combnet_core::Error::Input("x".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = combnet_core::Error::Config("x".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = WeightFileError::BadMagic(*b"XXXX").into();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("W01"));
    }

    #[test]
    fn missing_config_is_input_error() {
        let e = load_config(Some(Path::new("/nonexistent/combnet.toml"))).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
