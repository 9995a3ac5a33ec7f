//! Online approximate dynamic programming for a robust mean-field traffic game.
//!
//! The controller learns the weights of a Fourier value function by gradient
//! flow on its HJB-Isaacs residual while the traffic density it steers is
//! advanced by a finite-volume forward Kolmogorov solver. A reflected-SDE
//! particle simulation cross-checks the density.

pub mod basis;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fk;
pub mod gradcheck;
pub mod mc;
pub mod output;
pub mod policy;
pub mod residual;
pub mod stepper;

pub use basis::{BasisIndex, Branch, WeightMatrices};
pub use config::{GridSpec, ModelParams, RunConfig, ValidationReport};
pub use error::{ConfigError, OutputError, SimError};
pub use fk::{DensityField, VelocityField};
pub use stepper::{AdpSystem, CoupledState, RunSummary};
