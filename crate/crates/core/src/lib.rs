//! Cause-specific flexible parametric (Royston–Parmar) survival models and
//! regression standardisation of causal estimands under competing events.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads delimited data, prepares the prostate trial file and
//!   declares the survival structure (failure cause, administrative exit).
//! * [`spline`] builds restricted cubic spline bases, with optional
//!   orthogonalisation through a stored `R` matrix.
//! * [`fpm`] fits models on the log cumulative hazard scale by Newton–Raphson.
//! * [`nonparam`] holds Kaplan–Meier and Aalen–Johansen estimators.
//! * [`standardize`] averages model predictions over a population under
//!   counterfactual covariate scenarios: survival, failure, cause-specific
//!   cumulative incidence and restricted mean failure time, with contrasts and
//!   delta-method confidence intervals.
//! * [`analysis`] bundles the canned recipes (total, direct and separable
//!   effects plus the interaction/age-spline extensions).
//! * [`cli`] is the command-line front end used by the `crstd` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod fpm;
pub mod nonparam;
pub mod simulate;
pub mod spline;
pub mod standardize;

pub use dataset::{Column, Schema, SurvivalDeclaration, SurvivalFrame};
pub use fpm::{FpmFit, ModelSpec};
pub use spline::{KnotVector, SplineBasis};
pub use standardize::{AtScenario, StandardizeRequest, StandardizedSeries};
