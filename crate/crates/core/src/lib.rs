//! Encoding-model toolkit: audio features, hemodynamic alignment,
//! cross-validated ridge brain scores, ΔR contrasts, group statistics and
//! a CTC objective, plus synthetic ground-truth generators.

pub mod contrast;
pub mod ctc;
pub mod dsp;
pub mod encode;
pub mod error;
pub mod groupstats;
pub mod hemo;
pub mod matrixio;
pub mod rng;
pub mod synth;

pub use encode::{brain_score, LambdaGrid, RidgeFit, ScoreMap, ScoreOptions, ScoringMode, SplitPlan};
pub use error::{Error, Result};
pub use matrixio::{DatasetManifest, FeatureMatrix, ResponseMatrix};
pub use ctc::CtcInstance;
