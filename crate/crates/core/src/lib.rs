//! Beable trajectories of the continuous spontaneous localization model.
//!
//! The crate integrates the stochastic position/momentum equations over large
//! ensembles, extracts the enhanced-diffusion scaling laws from the ensemble
//! moments, and cross-checks the Markovian part of the dynamics against a
//! finite-difference phase-space Fokker–Planck solver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod fokker_planck;
pub mod io;
pub mod kernel;
pub mod noise;
pub mod params;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{CslError, Result};
pub use params::{analytic_rates, derive_gamma, mean_energy_input, AnalyticRates, PhysParams};
