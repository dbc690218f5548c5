//! Core algorithms for retrieval-grounded EEG event detection and
//! reference-guided report generation.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation over
//! in-memory data. File formats, the synthetic-corpus generator, the CLI, and
//! the remote completion adapter live in the companion `evidexr` crate.
//!
//! Pipeline shape:
//!
//! ```text
//! recordings ─ signal ─▶ labeled segments
//!                          │
//!                          ├─ align  ─▶ unit-norm embeddings (dual encoder, InfoNCE)
//!                          ├─ index  ─▶ exact / partitioned top-K cosine search
//!                          ├─ detect ─▶ evidence-vote classification (K, γ)
//!                          ├─ report ─▶ verbatim reference replication
//!                          └─ eval   ─▶ detection / retrieval / text-overlap metrics
//! ```
//!
//! Every operation is deterministic given its inputs and seed; nothing in this
//! crate spawns threads or touches the clock.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod align;
pub mod corpus;
pub mod detect;
pub mod eval;
pub mod index;
pub mod report;
pub mod signal;

pub use corpus::{CaseRecord, Corpus, Embedding, EventAnnotation, Segment, NORMAL_TEMPLATE_ID};
pub use index::{NeighborHit, NeighborList, VectorIndex};
