//! Predicting final course grades from the first weeks of homework
//! submission logs.
//!
//! The pipeline runs [`ingest`] → [`features`] → [`selection`] →
//! [`models`] under leave-one-out [`eval`]; [`synth`] generates stand-in
//! cohorts and [`cli`] wires everything to the `gradecast` binary.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod parallel;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{loocv, EvalReport, LooPredictions, Prep};
pub use features::{assemble_feature_matrix, FeatureMatrix};
pub use ingest::{build_dataset, Dataset, Grade};
pub use matrix::Matrix;
pub use models::{train, ModelKind, ModelSpec, PredictionOutcome, TrainedModel};
pub use selection::{Thresholds, SWEEP_GRID};
