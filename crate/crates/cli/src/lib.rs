// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for `pidsteer`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{exit, CliError};
