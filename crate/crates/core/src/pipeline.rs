//! Ingest, link and build in one step.

use crate::config::Config;
use crate::graph::{build_graph, GraphError, QedbGraph};
use crate::ingest::Corpus;
use crate::linker::match_corpus;

/// Matches entities to question references and builds the graph.
pub fn build(corpus: &Corpus, config: &Config) -> Result<QedbGraph, GraphError> {
    let matches = match_corpus(corpus, config.match_options());
    build_graph(corpus, &matches, config.build_options())
}
