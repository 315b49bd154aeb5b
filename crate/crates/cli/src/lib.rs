//! Command-line front end for `conjdesign`: design solves, decentralized
//! runs, learning dynamics, consistency checks and the benchmark reproductions.

pub mod args;
pub mod commands;
pub mod input;
pub mod manifest;
pub mod output;
pub mod reproduce;

use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// A check or acceptance threshold failed.
    pub const CHECK_FAILED: i32 = 1;
    pub const BAD_INPUT: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const MAX_ITER: i32 = 4;
    pub const SINGULAR: i32 = 5;
}

/// An error carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(exit::BAD_INPUT, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<conjdesign::Error> for Failure {
    fn from(e: conjdesign::Error) -> Self {
        use conjdesign::Error as E;
        let code = match &e {
            E::Format(_) | E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::MissingConjecture { .. } => {
                exit::BAD_INPUT
            }
            E::Singular(_) => exit::SINGULAR,
            _ => exit::INFEASIBLE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

pub type CmdResult = Result<i32, Failure>;
