//! Robustness stress-test generation and evaluation for image-text matching.
//!
//! The crate builds enlarged retrieval pools for COCO-style test splits:
//! fooling captions are produced by substituting (or deleting) the noun whose
//! removal moves the caption embedding the least, and fooling images are
//! produced by blending an unrelated image into the original (global mix or
//! rectangular patch). Retrieval scorers are then evaluated on the enlarged
//! pools with Recall@1, drop rate and False Recall@1.
//!
//! Module map:
//! - [`corpus`]: Karpathy-split ingestion, tokenization and noun tagging.
//! - [`concept`]: concept groups, synonyms and target sampling.
//! - [`embedding`]: encoder access (HTTP or deterministic stub) and the
//!   on-disk embedding cache.
//! - [`ei`]: leave-one-out embedding-influence scores and source-word consensus.
//! - [`caption_forge`]: substitution, deletion and multi-word caption sets.
//! - [`image_forge`]: Mix and Patch image sets.
//! - [`eval`]: pool assembly, ranking kernels, metrics and reports.
//! - [`pipeline`]: the staged, reproducible end-to-end driver.

pub mod caption_forge;
pub mod concept;
pub mod corpus;
pub mod ei;
pub mod embedding;
mod error;
pub mod eval;
pub mod fixture;
pub mod image_forge;
pub mod pipeline;
pub mod seed;
pub mod wordlist;

pub use error::{Error, Result};

/// Version string recorded in run manifests.
pub const TOOL_VERSION: &str = concat!("rocoforge ", env!("CARGO_PKG_VERSION"));
