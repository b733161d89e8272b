//! Offline ensembles of news recommenders over MIND-format logs.
//!
//! The pipeline reads a news catalog and behavior log ([`dataset`]), scores
//! each impression's candidates with base learners ([`learners`], backed by
//! [`text`] for TF-IDF and dense embeddings), fuses the per-learner rankings
//! by weighted linear aggregation ([`ensemble`]) and reports AUC, MRR,
//! nDCG@5 and nDCG@10 ([`metrics`]). [`fixture`] generates synthetic data
//! with planted content and collaborative signals, and [`cli`] wires it all
//! into reproducible command-line runs.

pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod fixture;
pub mod learners;
pub mod metrics;
pub mod text;
