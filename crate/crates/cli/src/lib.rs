//! Command-line driver: simulate sessions, sweep K×F grids, train lexica,
//! score logs and compare systems.

pub mod commands;
pub mod decoders;
pub mod sweep;

use std::fmt;

use retrans::stream::SessionError;

pub use commands::{run, Cli};
pub use decoders::DecoderSpec;
pub use sweep::{run_sweep, SweepConfig, SweepReport, SweepRow};

pub const EXIT_FAILURE: i32 = 1;
/// The decoder could not be resolved or started.
pub const EXIT_DECODER: i32 = 2;
pub const EXIT_CORPUS: i32 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }

    pub fn other(error: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_FAILURE, error)
    }

    pub fn decoder(error: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_DECODER, error)
    }

    pub fn corpus(error: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_CORPUS, error)
    }

    /// Setup failures are corpus problems; decode failures are runtime ones.
    pub fn session(error: SessionError) -> Self {
        match error {
            SessionError::Setup(e) => Self::corpus(e),
            e @ SessionError::Decode { .. } => Self::other(e),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        Self::other(error)
    }
}
