//! Authorship verification with calibrated posteriors, learned abstention
//! and ensembling.
//!
//! A [`model::Verifier`] maps two documents to a same-author probability in
//! stages: hashed character n-gram features, a `tanh` document embedding, a
//! metric-learning projection to a linguistic embedding vector (LEV), a
//! two-covariance Bayes-factor score, an uncertainty adaptation layer that
//! re-calibrates the posterior, and an out-of-distribution detector that
//! flags trials to be left unanswered. [`ensemble::Ensemble`] combines an odd
//! number of verifiers by majority vote on the abstention flag.

pub mod bfs;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod dataprep;
pub mod dml;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod o2d2;
pub mod params;
pub mod trainer;
pub mod ual;

pub use error::{Error, Result};
