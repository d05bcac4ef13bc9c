//! Cross-validated linear encoding models ("brain scores").
//!
//! For each outer fold of a leave-one-block-out plan, features and targets
//! are standardized on the training rows, a ridge regression is fit per
//! target with its penalty chosen by exact leave-one-out error on the
//! training rows, and the held-out predictions are scored with Pearson's r.

mod detrend;
mod pearson;
mod ridge;
mod score;
mod split;
mod standardize;

pub use detrend::detrend_blocks;
pub use pearson::{pearson, Correlation};
pub use ridge::{ridge_solve, GridFactors, LambdaGrid, RidgeFit, RidgeModel, RidgeSvd};
pub use score::{brain_score, ScoreMap, ScoreOptions, ScoringMode, TARGET_CHUNK};
pub use split::{make_split_plan, Fold, SplitPlan};
pub use standardize::{standardize, ColumnStats};
