//! Interpretable integer point scorecards for ordinal outcomes.
//!
//! The pipeline splits and imputes a table ([`data`]), ranks predictors with
//! a random forest ([`ranking`]), bins continuous predictors at training
//! percentiles ([`transform`]), fits a proportional odds model ([`pom`]),
//! turns the positive-coefficient fit into integer points ([`scorecard`]),
//! and evaluates scores with mean AUC and the generalized c-index ([`eval`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod link;
pub mod pipeline;
pub mod pom;
pub mod ranking;
pub mod scorecard;
pub mod stats;
pub mod transform;

pub use error::{Result, ScoreError};
pub use link::Link;
