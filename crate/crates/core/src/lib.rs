//! Generative data augmentation for long- and short-text classifiers.
//!
//! The pipeline finetunes a generative language model separately per class on
//! marker-wrapped training text, samples new candidate instances from class
//! prefixes, and keeps only candidates whose embedding falls within a distance
//! threshold of the class embedding centroid. An evaluation harness compares
//! classifiers trained on the original, EDA-augmented, and generatively
//! augmented data over repeated seeded runs.
//!
//! Modules:
//! - [`corpus`]: JSONL datasets, stratified holdout splits, low-data subsampling
//! - [`backend`]: generative model traits, the reference memorizing model, and
//!   the line-protocol adapter for external model processes
//! - [`pipeline`]: prefix preparation, candidate generation, marker stripping,
//!   end-to-end augmentation runs, and the EDA comparison baseline
//! - [`embed`] / [`filter`]: embedding models and centroid distance filtering
//! - [`eval`]: metrics, repeated runs, summary tables, and delta reports
//! - [`manifest`]: reproducibility manifests written by pipeline runs
//! - [`synthetic`]: deterministic synthetic classification tasks for smoke
//!   tests and benchmarks

pub mod backend;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod filter;
pub mod hash;
pub mod manifest;
pub mod pipeline;
pub mod synthetic;
