//! Security-relevant commit classification.
//!
//! Commits are mined from git repositories ([`corpus`]), reduced to token
//! documents ([`textprep`]) and count vectors ([`features`]), and scored by
//! two class-weighted linear SVMs ([`svm`]), one on the log message and one
//! on the patch. [`ensemble`] flags a commit when either model does;
//! [`eval`] measures that with stratified cross-validation and weight
//! sweeps.

pub mod corpus;
pub mod ensemble;
mod error;
pub mod eval;
pub mod features;
pub mod svm;
pub mod synth;
pub mod textprep;

pub use corpus::{Commit, Dataset, Label, LabeledCommit, Provenance, SamplingConfig};
pub use ensemble::{
    load_classifier, save_classifier, train_commit_classifier, ClassifierParams, CommitClassifier, Prediction,
};
pub use error::{Error, Result};
pub use eval::{FoldAssignment, MetricsReport, ModelMetrics, SweepResult};
pub use features::{SparseVector, VocabParams, Vocabulary};
pub use svm::{LinearModel, TrainConfig};
pub use textprep::{Channel, PrepConfig, TokenDoc};
