//! Library surface of the command-line front end.
//!
//! The binary is a thin wrapper around [`config`] (strict JSON run
//! configuration) and [`commands`] (dispatch plus exit-code mapping) so
//! both stay importable from integration tests.

pub mod commands;
pub mod config;
