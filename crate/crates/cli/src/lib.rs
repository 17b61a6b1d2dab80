//! Command-line pipeline around `nfmlab-core`: run configuration, checkpoints,
//! CSV/SVG output and the five subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod models;
pub mod report;
pub mod svg;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, RunConfig};

/// Coupling selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingName {
    Fm,
    Ot,
    Sdot,
    Nfm,
}

impl CouplingName {
    pub fn as_str(self) -> &'static str {
        match self {
            CouplingName::Fm => "fm",
            CouplingName::Ot => "ot",
            CouplingName::Sdot => "sdot",
            CouplingName::Nfm => "nfm",
        }
    }

    pub fn code(self) -> f64 {
        match self {
            CouplingName::Fm => 0.0,
            CouplingName::Ot => 1.0,
            CouplingName::Sdot => 2.0,
            CouplingName::Nfm => 3.0,
        }
    }

    pub fn from_code(c: usize) -> Option<Self> {
        [CouplingName::Fm, CouplingName::Ot, CouplingName::Sdot, CouplingName::Nfm]
            .get(c)
            .copied()
    }
}

impl fmt::Display for CouplingName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CouplingName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fm" => Ok(CouplingName::Fm),
            "ot" => Ok(CouplingName::Ot),
            "sdot" => Ok(CouplingName::Sdot),
            "nfm" => Ok(CouplingName::Nfm),
            _ => Err(format!("unknown coupling {s:?} (fm|ot|sdot|nfm)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },

    #[error(transparent)]
    Core(#[from] nfmlab_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Reads and validates a config file; `None` gives the defaults.
pub fn load_config(path: Option<&std::path::Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let config_err = |source| CliError::Config {
        path: path.to_path_buf(),
        source,
    };
    let text = String::from_utf8(bytes)
        .map_err(|_| config_err(ConfigError::at(1, None, "config is not valid UTF-8")))?;
    RunConfig::parse(&text).map_err(config_err)
}
