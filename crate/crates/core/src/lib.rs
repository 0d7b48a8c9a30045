//! Build and query a question-answer explanation database (QEDB).
//!
//! Generated question/answer pairs whose question spans are aligned to
//! passage spans are turned into a graph: answer and reference spans are
//! nodes, every question is a hyperedge labelled with its abstracted form
//! (`"what is $1 based on"`), and entity links attach knowledge-base
//! entities to spans. The graph supports compositional queries (two-hop
//! bridge joins, entity frames, shared-answer pairs, related entities) and
//! lexical one-hop retrieval.
//!
//! The pipeline is:
//!
//! 1. [`ingest::load_corpus`] reads passages, QA records and entity links.
//! 2. [`linker::match_corpus`] attaches entities to question references.
//! 3. [`graph::build_graph`] builds the [`graph::QedbGraph`], which
//!    [`graph::save_store`] persists.
//! 4. [`compose`] and [`retrieve`] query it.
//!
//! [`pipeline::build`] runs steps 1–3 in one call.

pub mod compose;
pub mod config;
pub mod graph;
pub mod ingest;
pub mod linker;
pub mod model;
pub mod pipeline;
pub mod retrieve;

pub use config::Config;
pub use graph::QedbGraph;
pub use model::{EntityId, EntityLink, Passage, QaRecord, RecordId, ReferencePair, Span};
