//! Monte Carlo harness for fingerprinting experiments.
//!
//! An [`ExperimentConfig`] names a code, an attack, a decoder and a
//! blocklength sweep. [`run_trial`] executes the whole pipeline once, keyed
//! by `(seed, N, trial)`, and [`estimate`] aggregates trials into error
//! rates with Wilson intervals and fitted exponents.

pub mod config;
pub mod estimate;
pub mod stats;
pub mod trial;

pub use config::{CoalitionRule, CodeDesign, CodeSpec, DecoderSpec, ExperimentConfig, InfeasiblePolicy};
pub use estimate::{estimate, EstimateReport, EventStats, PointEstimate};
pub use stats::{exponent_fit, rule_of_three, wilson, ExponentFit};
pub use trial::{draw_codebook, run_trial, Experiment, TrialEvents, TrialRecord};
