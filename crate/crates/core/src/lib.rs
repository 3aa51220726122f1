//! Structure-aware synthetic tabular data generation.
//!
//! The pipeline has two stages. [`discovery`] asks a language model to grow a
//! dependency DAG over the attributes of a small training set, guided by
//! empirical [`association`] scores and resolving any cycles it proposes.
//! [`synthesis`] then generates rows layer by layer along that graph.
//! [`evaluation`] scores the output for downstream utility, privacy risk and
//! statistical fidelity.

pub mod association;
pub mod binning;
pub mod dataset;
pub mod depgraph;
pub mod discovery;
pub mod evaluation;
pub mod llm;
pub mod synthesis;

pub use dataset::{Attribute, AttributeKind, Cell, Dataset, Schema, Task};
pub use depgraph::{DependencyGraph, Edge};
