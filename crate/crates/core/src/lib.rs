//! Joint vehicle-feature tracking with a Poisson multi-Bernoulli filter.
//!
//! This crate implements a multisensor multi-target tracker for the setting
//! where radar-like sensors are mounted on vehicles whose own states are
//! uncertain. Undetected features are modelled by a Poisson point process,
//! detected features by Bernoulli components, and the vehicle states by
//! Gaussian densities. Vehicle state uncertainty is marginalized into the
//! feature measurement likelihoods, and (optionally) feature tracks feed
//! information back into the vehicle states.
//!
//! Module layout:
//! - [`gaussian`]: dense small-matrix Gaussian algebra (densities, mixtures,
//!   Kalman conditioning, moment matching, mixture reduction).
//! - [`rfs`]: random-finite-set belief containers (Bernoulli components,
//!   Poisson intensity, the PMB state) and association bookkeeping.
//! - [`models`]: constant-velocity dynamics, GNSS and vehicle-to-feature
//!   measurement models, clutter, birth and survival.
//! - [`association`]: marginal data association by exact enumeration and by
//!   loopy belief propagation.
//! - [`filter`]: the prediction / GNSS update / V2F feature update / vehicle
//!   update recursion and the sequential multisensor step.
//! - [`metrics`]: OSPA and position-error statistics.
//! - [`baselines`]: local Kalman filter and the genie central Kalman filter.
//! - [`sim`]: synthetic scenario generation and the Monte-Carlo harness.

pub mod association;
pub mod baselines;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod metrics;
pub mod models;
pub mod rfs;
pub mod sim;

pub use error::{Result, SlatError};
