//! Toolkit for few-shot prompted machine translation experiments:
//! parallel pool ingestion, in-context example selection (random, kNN,
//! maximum-likelihood fixed prompt), prompt rendering, pluggable generation
//! backends, segment-level metric aggregation, MQM scoring, target-side
//! n-gram contamination auditing, and paired permutation significance tests.

pub mod backend;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod hash;
pub mod manifest;
pub mod mqm;
pub mod overlap;
pub mod prompting;
pub mod selection;
pub mod stats;
pub mod text;

pub use error::{Error, Result};
