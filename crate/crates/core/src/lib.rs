//! Maximal-Term with Subsample (MTS) sketches.
//!
//! An MTS sketch summarizes a Bernoulli-sampled stream with two fixed-size
//! structures sharing one coordinated hash family:
//!
//! * per-bucket maximal hash registers, which drive a HyperLogLog-style
//!   distinct count of the *sampled* stream and max-coordinated Jaccard
//!   indicators across streams, and
//! * a bottom-`u` subsample of distinct elements with occurrence counts,
//!   which drives a Good-Turing correction from the sampled count up to the
//!   full-stream count.
//!
//! Because all sketches share hash seeds, the same machinery estimates the
//! cardinality of any union/intersection/difference expression over `k`
//! streams from their individual sketches. [`estimators`] holds the
//! estimation procedures, [`analysis`] their closed-form variances, and
//! [`workload`]/[`experiment`] a synthetic-stream harness that reproduces the
//! bias/variance study the estimators were validated on.

pub mod analysis;
pub mod estimators;
pub mod experiment;
pub mod expr;
pub mod hashing;
pub mod sketch;
pub mod workload;

pub use estimators::{EstimateError, EstimateReport};
pub use expr::{ParsedExpr, SetExpr, SetOp};
pub use hashing::{SeedSet, UnitHash};
pub use sketch::{MtsSketch, SketchConfig, SketchError};
