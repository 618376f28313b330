//! Incremental model materialization and reuse over ordered datasets.
//!
//! Models (ridge linear regression, gaussian/multinomial naive Bayes,
//! chunked logistic regression) are kept as data-size-independent
//! sufficient statistics keyed by the closed id range they were built on.
//! A query for a model over a new range is answered by planning the
//! cheapest signed combination of materialized models and base-data
//! fetches, instead of always rebuilding from raw rows.

pub mod bench;
pub mod catalog;
pub mod datastore;
pub mod error;
pub mod executor;
pub mod linreg;
pub mod logreg;
pub mod naive_bayes;
pub mod planner;
pub mod range;
mod solve;
pub mod synth;

pub use error::{Error, Result};
pub use range::IdRange;
