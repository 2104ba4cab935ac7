//! Inference of spreading parameters `(p, q)` of a hidden cascade from
//! symptom-only observations.
//!
//! Observed per-entity summary statistics are compared with statistics
//! simulated at candidate parameters. A classifier per entity tries to tell
//! the two apart, and a derivative-free minimizer searches for the
//! parameters at which the classifiers do no better than chance.

pub mod cascade;
pub mod classify;
pub mod empirical;
pub mod error;
pub mod features;
pub mod graph;
pub mod optimize;
pub mod report;
pub mod rng;

pub use cascade::{BaselineModel, SpreadParams, Symptom};
pub use classify::{ClassifierKind, ClassifierSpec, ParamGrid};
pub use error::{Error, Result};
pub use features::{FeatureSet, FeatureSpec, StatisticKind};
pub use graph::{Graph, SeedSchedule};
pub use optimize::{infer, InferenceConfig, InferenceResult, ObjectiveContext, PowellConfig, SyntheticSetup};
