//! Semantics-preserving source-to-source transformations for C functions.
//!
//! The crate parses single C functions into span-anchored syntax trees,
//! locates sites where one of eight natural rewrite rules applies, composes
//! rewrites across sites and rules, measures how the rewrites change code
//! property graphs and complexity metrics, and drives black-box vulnerability
//! detectors to measure evasion.

pub mod parser;
pub mod analysis;
pub mod transforms;
pub mod composer;
pub mod baseline;
pub mod cpg;
pub mod metrics;
pub mod corpus;
pub mod harness;
