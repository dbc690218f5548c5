//! Desk-scale retrieval-grounded EEG event detection and report generation.
//!
//! This crate carries everything that touches the outside world: the JSONL
//! and binary container formats, the synthetic corpus generator, the
//! benchmark/ablation harness, the optional remote completion adapter, and
//! the `evidexr` CLI. The algorithms live in `evidexr-core`.

pub mod binio;
pub mod cli;
pub mod container;
pub mod corpus_io;
pub mod harness;
pub mod index_io;
pub mod params_io;
pub mod remote;
pub mod synth;
