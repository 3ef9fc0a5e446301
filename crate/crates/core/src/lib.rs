//! Siamese-network semantic code search.
//!
//! Code snippets and natural-language descriptions are mapped into a joint
//! embedding space by modality-specific extraction networks followed by a
//! weight-shared Siamese head. Retrieval ranks candidate snippets by cosine
//! similarity to the query embedding, taken either at the extraction layer or
//! at the head output.
//!
//! Module map:
//!
//! - [`codefeat`]: identifier splitting, code/text tokenization, method name
//!   and API sequence heuristics.
//! - [`corpus`]: record ingestion, vocabularies, encoding, splitting and
//!   in-batch negative sampling.
//! - [`nn`]: layers with explicit backward passes, Adam, gradient checking.
//! - [`models`]: the four extraction architectures and the Siamese head.
//! - [`losses`]: contrastive, triplet and cosine-contrastive objectives.
//! - [`trainer`]: training loop, patience/halving schedule, checkpoints.
//! - [`evalret`]: MRR evaluation, embedding index, query, export.
//! - [`synthcorpus`]: deterministic synthetic corpora for desk-scale runs.

pub mod codefeat;
pub mod corpus;
pub mod error;
pub mod evalret;
pub mod losses;
pub mod models;
pub mod nn;
pub mod synthcorpus;
pub mod trainer;

mod framing;

pub use error::{Error, Result};
