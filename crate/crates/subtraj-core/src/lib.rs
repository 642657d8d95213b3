//! Curation toolkit for long-form reasoning traces.
//!
//! A reasoning trace is a question, a delimited thinking block, and a final
//! answer. The thinking block decomposes into *subtrajectories*: contiguous
//! solution attempts opened by transition markers ("Alternatively", ...).
//! This crate provides the building blocks of a curation pipeline over such
//! traces:
//!
//! - [`corpus`] — the record model and streaming JSONL ingestion/emission.
//! - [`segmenter`] — thinking-block extraction and lossless subtrajectory
//!   segmentation.
//! - [`judge`] — five-criteria quality verdicts and independence verdicts
//!   through pluggable backends with persistent caching.
//! - [`reviser`] — elimination of suboptimal, independent subtrajectories.
//! - [`scorer`] — per-subtrajectory scores and token-weighted quality scores.
//! - [`sampler`] — quality-sorted subset selection constrained to match the
//!   source distribution of subtrajectory counts via KL divergence.
//! - [`filters`] — rule-based quality filters, difficulty filtering, and
//!   n-gram benchmark decontamination.
//! - [`report`] — thinking-efficacy statistics and delta reports.

pub mod corpus;
pub mod filters;
pub mod judge;
pub mod report;
pub mod reviser;
pub mod sampler;
pub mod scorer;
pub mod segmenter;

/// Version stamped into every stage attachment this tool writes.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
