// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exit-code classification.

use std::fmt::Display;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn data(msg: impl Display) -> Self {
        Failure { code: EXIT_DATA, error: anyhow::anyhow!("{msg}") }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Tags an error with the exit code it should produce.
pub trait Classify<T> {
    /// Bad input: unreadable or malformed files, incompatible shapes.
    fn data(self, what: impl Display) -> CliResult<T>;
    /// Failure while doing the work on valid input.
    fn runtime(self, what: impl Display) -> CliResult<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn data(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure { code: EXIT_DATA, error: e.into().context(what.to_string()) })
    }

    fn runtime(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure { code: EXIT_RUNTIME, error: e.into().context(what.to_string()) })
    }
}
