//! Variance-based sensitivity analysis for models with dependent Gaussian
//! inputs: dependent sensitivity indices (main and total), Shapley effects,
//! classic Sobol' indices where independence permits them, and
//! derivative-based upper bounds that bracket the total indices.
//!
//! The pipeline: [`input`] validates the joint Gaussian and detects its
//! independence structure, [`dependency`] factorizes each dependent block
//! into a triangular map driven by independent innovations, [`engine`]
//! estimates every variance quantity (with exact linear-Gaussian shortcuts),
//! [`indices`] and [`bounds`] assemble the per-input report, and [`config`]
//! plus the `dsikit` binary expose it all as a config-driven CLI.

pub mod bounds;
pub mod combinatorics;
pub mod config;
pub mod dependency;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod indices;
pub mod input;
pub mod linalg;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
pub use input::{build_input_spec, register_builtin_model, GaussianInputSpec, ModelHandle};
