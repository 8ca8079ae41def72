//! Learned query runtime prediction from PostgreSQL execution plans.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`workload`]: instantiate parameterized query templates into SQL.
//! - [`collector`]: run the workload with `EXPLAIN (ANALYZE, FORMAT JSON)`.
//! - [`plan_ingest`]: parse plan documents into validated trees.
//! - [`featurize`]: scalar, structural and semantic features.
//! - [`learn`]: linear, forest, boosted-tree, MLP and LSTM regressors.
//! - [`evaluate`]: metrics, stratified splits and reports.
//!
//! The `plancost` binary wires the stages together; see [`cli`].

pub mod cli;
pub mod collector;
pub mod evaluate;
pub mod featurize;
pub mod learn;
pub mod plan_ingest;
pub mod workload;
