// SPDX-License-Identifier: MIT OR Apache-2.0

//! Controller-based activation steering as a disturbed discrete-time system.
//!
//! The crate models the layerwise error between a desired and an undesired
//! activation branch, `ē(k+1) = Ā(k) ē(k) − Ā(k) u(k) + w(k)`, drives it with
//! P, PI and PID steering laws, and computes the stability certificates,
//! steady-state errors and overshoot bounds those laws admit.
//!
//! ## Layout
//!
//! - [`linalg`]: dense kernel (norms, spectra, pseudoinverse, Lyapunov).
//! - [`plant`]: contrastive two-branch plants, exact and linearized stepping.
//! - [`controllers`]: gains, controller state, steering functions, rollouts.
//! - [`analysis`]: ISS envelopes, certificates, scalarization, overshoot.
//! - [`oracle`]: naive reference implementations used for cross-checking.
//! - [`ensemble`]: seed-parallel evaluation with a sequential fallback.
//! - [`scenarios`]: synthetic plants and trajectories used by experiments.
//!
//! Ensemble evaluation runs on rayon when the `parallel` feature (default)
//! is enabled; results are identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controllers;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod plant;
pub mod scenarios;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
