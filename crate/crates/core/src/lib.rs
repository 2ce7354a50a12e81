//! Hate speech detection and target classification toolkit.
//!
//! The crate is organised the way the data flows:
//!
//! - [`corpus`] loads the annotated datasets, binarizes label means and splits
//!   examples into train/test partitions.
//! - [`normalize`] implements the deterministic tweet-style text cleanup.
//! - [`augment`] adds back-translated paraphrases to a training split.
//! - [`topics`] clusters texts, names the clusters and appends topic words to inputs.
//! - [`model`] holds the hashed n-gram featurizer, the class-weighted
//!   logistic-regression baseline and the binary model format.
//! - [`eval`] computes confusion matrices and accuracy/recall/precision/F1 reports.
//! - [`explain`] produces LIME-style token attributions for any classifier.
//! - [`pipeline`] chains detector and target classifier over a post stream and
//!   reports the target distribution.

pub mod augment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod model;
pub mod normalize;
pub mod pipeline;
pub mod topics;

pub use error::{Error, ErrorKind, Result};
