//! Experiment driver for the adpsgd toolkit: mixing analysis, training
//! runs, straggler timing studies and the built-in verification suite.
//! Every command writes plain CSV/text files into an output directory
//! together with the resolved configuration.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] adpsgd_core::Error),
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
    Diverged,
}

pub const EXIT_SUCCESS: u8 = 0;
pub const EXIT_VERIFICATION_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Self::Success => EXIT_SUCCESS,
            Self::VerificationFailed => EXIT_VERIFICATION_FAILED,
            Self::Diverged => EXIT_DIVERGED,
        }
    }
}

impl CliError {
    /// Configuration and argument problems are usage errors; anything that
    /// fails while running is reported like a failed check.
    pub fn code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_USAGE,
            Self::Core(adpsgd_core::Error::InvalidArgument(_) | adpsgd_core::Error::InvalidOrder { .. }) => EXIT_USAGE,
            Self::Io(_) | Self::Core(_) => EXIT_VERIFICATION_FAILED,
        }
    }
}

pub fn exit_code(result: &Result<Outcome, CliError>) -> ExitCode {
    ExitCode::from(match result {
        Ok(outcome) => outcome.code(),
        Err(e) => e.code(),
    })
}
