//! Lossless line-delimited export.
//!
//! Entity lines come first, then one quad per question edge carrying its
//! source spans, label, answer span and every entity attached to them.
//! [`read_export`] rebuilds a graph equal to the one exported.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    EdgeReference, EntityNode, Mention, MentionSource, QedbGraph, QuestionEdge, SpanKey, SpanNode,
};
use crate::model::{EntityId, RecordId, Span};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct ExportMention {
    entity_id: EntityId,
    source: MentionSource,
}

#[derive(Serialize, Deserialize)]
struct ExportSource {
    span: Span,
    q_span: Span,
    align_confidence: f64,
    entities: Vec<ExportMention>,
}

#[derive(Serialize, Deserialize)]
struct ExportAnswer {
    span: Span,
    entities: Vec<ExportMention>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ExportLine {
    Entity(EntityNode),
    Quad {
        record_id: RecordId,
        doc_id: String,
        question: String,
        label: String,
        sources: Vec<ExportSource>,
        answer: ExportAnswer,
    },
}

fn key_span(graph: &QedbGraph, key: &SpanKey) -> Span {
    Span::new(key.start, key.end, graph.span_text(key).unwrap_or_default())
}

fn export_mentions<'a>(mentions: impl IntoIterator<Item = &'a &'a Mention>) -> Vec<ExportMention> {
    mentions
        .into_iter()
        .map(|m| ExportMention {
            entity_id: m.entity_id.clone(),
            source: m.source.clone(),
        })
        .collect()
}

/// Writes the export of `graph` to `out`.
pub fn write_export<W: Write>(graph: &QedbGraph, mut out: W) -> io::Result<()> {
    let mut link_mentions: BTreeMap<&SpanKey, Vec<&Mention>> = BTreeMap::new();
    let mut scoped: BTreeMap<(&RecordId, usize), Vec<&Mention>> = BTreeMap::new();
    for m in &graph.mentions {
        match m.source.reference() {
            None => link_mentions.entry(&m.span).or_default().push(m),
            Some(scope) => scoped.entry(scope).or_default().push(m),
        }
    }
    let none = Vec::new();
    for entity in graph.entities.values() {
        serde_json::to_writer(&mut out, &ExportLine::Entity(entity.clone()))?;
        out.write_all(b"\n")?;
    }
    for edge in &graph.edges {
        let sources = edge
            .references
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let links = link_mentions.get(&r.source).unwrap_or(&none);
                let matched = scoped.get(&(&edge.record_id, i)).unwrap_or(&none);
                ExportSource {
                    span: key_span(graph, &r.source),
                    q_span: r.q_span.clone(),
                    align_confidence: r.align_confidence,
                    entities: export_mentions(links.iter().chain(matched)),
                }
            })
            .collect();
        let line = ExportLine::Quad {
            record_id: edge.record_id.clone(),
            doc_id: edge.doc_id.clone(),
            question: edge.question.clone(),
            label: edge.label.clone(),
            sources,
            answer: ExportAnswer {
                span: key_span(graph, &edge.target),
                entities: export_mentions(link_mentions.get(&edge.target).unwrap_or(&none)),
            },
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Rebuilds a graph from the output of [`write_export`].
pub fn read_export<R: BufRead>(reader: R) -> Result<QedbGraph, ExportError> {
    let mut spans: BTreeMap<SpanKey, SpanNode> = BTreeMap::new();
    let mut entities = BTreeMap::new();
    let mut edges = Vec::new();
    let mut mentions = Vec::new();
    let mut add_span = |doc_id: &str, span: &Span| {
        let key = SpanKey::of(doc_id, span);
        spans.entry(key.clone()).or_insert_with(|| SpanNode {
            key: key.clone(),
            text: span.text.clone(),
            is_answer: false,
            is_reference: false,
        });
        key
    };

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExportLine =
            serde_json::from_str(&line).map_err(|e| ExportError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        match parsed {
            ExportLine::Entity(node) => {
                entities.insert(node.entity_id.clone(), node);
            }
            ExportLine::Quad {
                record_id,
                doc_id,
                question,
                label,
                sources,
                answer,
            } => {
                let target = add_span(&doc_id, &answer.span);
                for m in answer.entities {
                    mentions.push(Mention {
                        entity_id: m.entity_id,
                        span: target.clone(),
                        source: m.source,
                    });
                }
                let mut references = Vec::with_capacity(sources.len());
                for source in sources {
                    let key = add_span(&doc_id, &source.span);
                    for m in source.entities {
                        mentions.push(Mention {
                            entity_id: m.entity_id,
                            span: key.clone(),
                            source: m.source,
                        });
                    }
                    references.push(EdgeReference {
                        source: key,
                        q_span: source.q_span,
                        align_confidence: source.align_confidence,
                    });
                }
                let min_align_confidence = references
                    .iter()
                    .map(|r| r.align_confidence)
                    .fold(1.0, f64::min);
                edges.push(QuestionEdge {
                    record_id,
                    doc_id,
                    question,
                    label,
                    references,
                    target,
                    min_align_confidence,
                });
            }
        }
    }
    if let Some(m) = mentions.iter().find(|m| !entities.contains_key(&m.entity_id)) {
        return Err(ExportError::Malformed {
            line: 0,
            message: format!("mention of undeclared entity {}", m.entity_id),
        });
    }
    Ok(QedbGraph::from_parts(spans, entities, edges, mentions))
}
