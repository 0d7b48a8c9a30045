//! The question-answer graph.
//!
//! Every answer span and every passage reference span becomes a node; two
//! records that select the same `(doc_id, start, end)` share that node even
//! when one uses it as an answer and the other as a reference. Each record
//! contributes one directed hyperedge from its reference nodes to its answer
//! node, labelled with the abstracted question. Entities are separate nodes
//! attached to spans by [`Mention`]s.

mod export;
mod store;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Corpus;
use crate::linker::{MatchVia, ReferenceEntityMatch};
use crate::model::{EntityId, QaRecord, RecordId, Span};

pub use export::{read_export, write_export, ExportError};
pub use store::{load_store, save_store, StoreError, STORE_FORMAT, STORE_VERSION};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("record {record_id}: question references {first} and {second} overlap")]
    OverlappingReferences {
        record_id: RecordId,
        first: usize,
        second: usize,
    },
}

/// Identity of a span node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanKey {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

impl SpanKey {
    pub fn of(doc_id: &str, span: &Span) -> Self {
        Self {
            doc_id: doc_id.to_owned(),
            start: span.start,
            end: span.end,
        }
    }

    fn contains(&self, doc_id: &str, span: &Span) -> bool {
        self.doc_id == doc_id && self.start <= span.start && span.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeId {
    Span(SpanKey),
    Entity { entity_id: EntityId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanNode {
    pub key: SpanKey,
    pub text: String,
    /// Some edge targets this span.
    pub is_answer: bool,
    /// Some edge uses this span as a source.
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityNode {
    pub entity_id: EntityId,
    pub canonical_name: String,
}

/// One source of a question edge: the passage span plus the question span
/// it was aligned with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReference {
    pub source: SpanKey,
    pub q_span: Span,
    pub align_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionEdge {
    pub record_id: RecordId,
    pub doc_id: String,
    pub question: String,
    /// Abstracted question with `$1..$k` placeholders.
    pub label: String,
    pub references: Vec<EdgeReference>,
    pub target: SpanKey,
    pub min_align_confidence: f64,
}

impl QuestionEdge {
    pub fn arity(&self) -> usize {
        self.references.len()
    }

    pub fn sources(&self) -> impl Iterator<Item = &SpanKey> {
        self.references.iter().map(|r| &r.source)
    }
}

/// Why an entity is attached to a span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MentionSource {
    /// A linker mention contained in (or equal to) the span.
    Link { mention: Span, link_confidence: f64 },
    /// The Jaccard matcher picked this entity for a question reference.
    Match {
        record_id: RecordId,
        reference_index: usize,
        similarity: f64,
        via: MatchVia,
        link_confidence: f64,
    },
    /// Listed in the record's `question_entities`.
    Supplied {
        record_id: RecordId,
        reference_index: usize,
    },
}

impl MentionSource {
    fn rank(&self) -> u8 {
        match self {
            MentionSource::Link { .. } => 0,
            MentionSource::Match { .. } => 1,
            MentionSource::Supplied { .. } => 2,
        }
    }

    /// `(record, reference)` this mention is scoped to, if any.
    pub fn reference(&self) -> Option<(&RecordId, usize)> {
        match self {
            MentionSource::Link { .. } => None,
            MentionSource::Match {
                record_id,
                reference_index,
                ..
            }
            | MentionSource::Supplied {
                record_id,
                reference_index,
            } => Some((record_id, *reference_index)),
        }
    }

    /// Linker confidence behind this mention; `None` for supplied entities.
    pub fn link_confidence(&self) -> Option<f64> {
        match self {
            MentionSource::Link { link_confidence, .. }
            | MentionSource::Match { link_confidence, .. } => Some(*link_confidence),
            MentionSource::Supplied { .. } => None,
        }
    }
}

/// Edge from an entity node to a span node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub entity_id: EntityId,
    pub span: SpanKey,
    pub source: MentionSource,
}

impl Mention {
    fn cmp_key(&self, other: &Self) -> Ordering {
        let scope = |m: &Mention| -> (String, usize, usize, usize) {
            match &m.source {
                MentionSource::Link { mention, .. } => (String::new(), 0, mention.start, mention.end),
                MentionSource::Match {
                    record_id,
                    reference_index,
                    ..
                }
                | MentionSource::Supplied {
                    record_id,
                    reference_index,
                } => (record_id.0.clone(), *reference_index, 0, 0),
            }
        };
        self.span
            .cmp(&other.span)
            .then_with(|| self.entity_id.cmp(&other.entity_id))
            .then_with(|| self.source.rank().cmp(&other.source.rank()))
            .then_with(|| scope(self).cmp(&scope(other)))
    }
}

/// An entity attached to an answer or reference, with the best linker
/// confidence supporting it (`None` when producer-supplied).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityAnnotation {
    pub entity_id: EntityId,
    pub link_confidence: Option<f64>,
}

impl EntityAnnotation {
    /// Supplied annotations carry no confidence and always pass.
    pub fn passes(&self, threshold: f64, strict: bool) -> bool {
        match self.link_confidence {
            None => true,
            Some(c) if strict => c > threshold,
            Some(c) => c >= threshold,
        }
    }
}

/// Lookup tables derived from edges and mentions; rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphIndex {
    /// Per edge: entities linked inside the answer span.
    pub answer_entities: Vec<Vec<EntityAnnotation>>,
    /// Per edge, per reference: entities associated with that reference.
    pub reference_entities: Vec<Vec<Vec<EntityAnnotation>>>,
    pub by_answer_entity: BTreeMap<EntityId, BTreeSet<usize>>,
    pub by_reference_entity: BTreeMap<EntityId, BTreeSet<usize>>,
    pub by_label: BTreeMap<String, Vec<usize>>,
    pub by_record: BTreeMap<RecordId, usize>,
}

fn merge_annotation(list: &mut Vec<EntityAnnotation>, entity: &EntityId, confidence: Option<f64>) {
    match list.iter_mut().find(|a| &a.entity_id == entity) {
        Some(existing) => {
            existing.link_confidence = match (existing.link_confidence, confidence) {
                (None, _) | (_, None) => None,
                (Some(a), Some(b)) => Some(a.max(b)),
            };
        }
        None => list.push(EntityAnnotation {
            entity_id: entity.clone(),
            link_confidence: confidence,
        }),
    }
}

impl GraphIndex {
    pub fn build(edges: &[QuestionEdge], mentions: &[Mention]) -> Self {
        let mut index = GraphIndex {
            answer_entities: vec![Vec::new(); edges.len()],
            reference_entities: edges.iter().map(|e| vec![Vec::new(); e.arity()]).collect(),
            ..Default::default()
        };
        let mut by_target: BTreeMap<&SpanKey, Vec<usize>> = BTreeMap::new();
        for (i, edge) in edges.iter().enumerate() {
            index.by_record.insert(edge.record_id.clone(), i);
            index.by_label.entry(edge.label.clone()).or_default().push(i);
            by_target.entry(&edge.target).or_default().push(i);
        }
        for mention in mentions {
            match &mention.source {
                MentionSource::Link {
                    link_confidence, ..
                } => {
                    for &i in by_target.get(&mention.span).into_iter().flatten() {
                        merge_annotation(
                            &mut index.answer_entities[i],
                            &mention.entity_id,
                            Some(*link_confidence),
                        );
                    }
                }
                source => {
                    let (record_id, reference_index) =
                        source.reference().expect("scoped mention");
                    if let Some(&i) = index.by_record.get(record_id) {
                        if let Some(slot) = index.reference_entities[i].get_mut(reference_index) {
                            merge_annotation(slot, &mention.entity_id, source.link_confidence());
                        }
                    }
                }
            }
        }
        for (i, annotations) in index.answer_entities.iter_mut().enumerate() {
            annotations.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
            for a in annotations.iter() {
                index
                    .by_answer_entity
                    .entry(a.entity_id.clone())
                    .or_default()
                    .insert(i);
            }
        }
        for (i, refs) in index.reference_entities.iter_mut().enumerate() {
            for annotations in refs.iter_mut() {
                annotations.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
                for a in annotations.iter() {
                    index
                        .by_reference_entity
                        .entry(a.entity_id.clone())
                        .or_default()
                        .insert(i);
                }
            }
        }
        index
    }
}

/// The built knowledge base.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QedbGraph {
    pub spans: BTreeMap<SpanKey, SpanNode>,
    pub entities: BTreeMap<EntityId, EntityNode>,
    /// Sorted by record id.
    pub edges: Vec<QuestionEdge>,
    /// Sorted by (span, entity, source).
    pub mentions: Vec<Mention>,
    pub index: GraphIndex,
}

impl QedbGraph {
    /// Assembles a graph from raw parts, putting everything in canonical
    /// order and recomputing node roles and indexes.
    pub fn from_parts(
        mut spans: BTreeMap<SpanKey, SpanNode>,
        entities: BTreeMap<EntityId, EntityNode>,
        mut edges: Vec<QuestionEdge>,
        mut mentions: Vec<Mention>,
    ) -> Self {
        edges.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        mentions.sort_by(Mention::cmp_key);
        mentions.dedup_by(|a, b| a.cmp_key(b) == Ordering::Equal);
        for node in spans.values_mut() {
            node.is_answer = false;
            node.is_reference = false;
        }
        for edge in &edges {
            if let Some(node) = spans.get_mut(&edge.target) {
                node.is_answer = true;
            }
            for source in edge.sources() {
                if let Some(node) = spans.get_mut(source) {
                    node.is_reference = true;
                }
            }
        }
        let index = GraphIndex::build(&edges, &mentions);
        QedbGraph {
            spans,
            entities,
            edges,
            mentions,
            index,
        }
    }

    pub fn node_count(&self) -> usize {
        self.spans.len() + self.entities.len()
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        match node {
            NodeId::Span(key) => self.spans.contains_key(key),
            NodeId::Entity { entity_id } => self.entities.contains_key(entity_id),
        }
    }

    pub fn edge(&self, record_id: &str) -> Option<&QuestionEdge> {
        self.index.by_record.get(record_id).map(|&i| &self.edges[i])
    }

    pub fn span_text(&self, key: &SpanKey) -> Option<&str> {
        self.spans.get(key).map(|n| n.text.as_str())
    }

    /// Text of the edge's answer span.
    pub fn answer_text(&self, edge: &QuestionEdge) -> &str {
        self.span_text(&edge.target).unwrap_or_default()
    }

    /// Canonical name of an entity, falling back to its id.
    pub fn entity_name<'a>(&'a self, entity: &'a EntityId) -> &'a str {
        self.entities
            .get(entity)
            .map_or(entity.as_str(), |n| n.canonical_name.as_str())
    }

    /// Edges whose answer span links to `entity`.
    pub fn edges_answering(&self, entity: &EntityId) -> impl Iterator<Item = usize> + '_ {
        self.index.by_answer_entity.get(entity).into_iter().flatten().copied()
    }

    /// Edges with some reference associated with `entity`.
    pub fn edges_referencing(&self, entity: &EntityId) -> impl Iterator<Item = usize> + '_ {
        self.index.by_reference_entity.get(entity).into_iter().flatten().copied()
    }
}

/// Replaces each question reference with `$i` (numbered by position) and
/// collapses runs of whitespace.
///
/// ```
/// use qedb::graph::abstract_question;
/// # use qedb::model::{QaRecord, ReferencePair, Span};
/// let question = "what is the tv series tipping the velvet based on";
/// let record = QaRecord {
///     record_id: "q1".into(),
///     question: question.into(),
///     doc_id: "d1".into(),
///     answer: Span::new(0, 1, "a"),
///     references: vec![ReferencePair {
///         q_span: Span::find(question, "the tv series tipping the velvet").unwrap(),
///         d_span: Span::new(2, 3, "b"),
///         align_confidence: 1.0,
///     }],
///     question_entities: vec![Default::default()],
/// };
/// assert_eq!(abstract_question(&record).unwrap(), "what is $1 based on");
/// ```
pub fn abstract_question(record: &QaRecord) -> Result<String, GraphError> {
    if record.references.is_empty() {
        return Ok(record.question.clone());
    }
    let mut order: Vec<usize> = (0..record.references.len()).collect();
    order.sort_by_key(|&i| record.references[i].q_span.start);
    for pair in order.windows(2) {
        let (a, b) = (&record.references[pair[0]].q_span, &record.references[pair[1]].q_span);
        if a.overlaps(b) {
            return Err(GraphError::OverlappingReferences {
                record_id: record.record_id.clone(),
                first: pair[0],
                second: pair[1],
            });
        }
    }
    let chars: Vec<char> = record.question.chars().collect();
    let mut out = String::with_capacity(record.question.len());
    let mut cursor = 0;
    for (placeholder, &i) in order.iter().enumerate() {
        let span = &record.references[i].q_span;
        let start = span.start.min(chars.len());
        out.extend(&chars[cursor.min(start)..start]);
        out.push_str(&format!("${}", placeholder + 1));
        cursor = span.end.min(chars.len());
    }
    out.extend(&chars[cursor..]);
    Ok(out.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Options for [`build_graph`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Links (and matches) below this confidence are ignored.
    pub min_link_confidence: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            min_link_confidence: 0.25,
        }
    }
}

/// Builds the graph from a validated corpus and the linker's matches.
pub fn build_graph(
    corpus: &Corpus,
    matches: &[ReferenceEntityMatch],
    options: BuildOptions,
) -> Result<QedbGraph, GraphError> {
    let mut spans: BTreeMap<SpanKey, SpanNode> = BTreeMap::new();
    let mut entities: BTreeMap<EntityId, EntityNode> = BTreeMap::new();
    let mut edges = Vec::with_capacity(corpus.records.len());
    let mut mentions = Vec::new();

    let add_span = |spans: &mut BTreeMap<SpanKey, SpanNode>, doc: &str, span: &Span| {
        let key = SpanKey::of(doc, span);
        spans.entry(key.clone()).or_insert_with(|| SpanNode {
            key: key.clone(),
            text: span.text.clone(),
            is_answer: false,
            is_reference: false,
        });
        key
    };

    for record in &corpus.records {
        let label = abstract_question(record)?;
        let target = add_span(&mut spans, &record.doc_id, &record.answer);
        let references = record
            .references
            .iter()
            .map(|pair| EdgeReference {
                source: add_span(&mut spans, &record.doc_id, &pair.d_span),
                q_span: pair.q_span.clone(),
                align_confidence: pair.align_confidence,
            })
            .collect::<Vec<_>>();
        for (i, set) in record.question_entities.iter().enumerate() {
            let Some(reference) = references.get(i) else { continue };
            for entity in set {
                mentions.push(Mention {
                    entity_id: entity.clone(),
                    span: reference.source.clone(),
                    source: MentionSource::Supplied {
                        record_id: record.record_id.clone(),
                        reference_index: i,
                    },
                });
            }
        }
        edges.push(QuestionEdge {
            record_id: record.record_id.clone(),
            doc_id: record.doc_id.clone(),
            question: record.question.clone(),
            label,
            references,
            target,
            min_align_confidence: record.min_align_confidence(),
        });
    }

    let mut spans_by_doc: BTreeMap<&str, Vec<&SpanKey>> = BTreeMap::new();
    for key in spans.keys() {
        spans_by_doc.entry(key.doc_id.as_str()).or_default().push(key);
    }
    for link in corpus
        .links
        .iter()
        .filter(|l| l.link_confidence >= options.min_link_confidence)
    {
        entities
            .entry(link.entity_id.clone())
            .and_modify(|node| {
                if link.canonical_name < node.canonical_name {
                    node.canonical_name = link.canonical_name.clone();
                }
            })
            .or_insert_with(|| EntityNode {
                entity_id: link.entity_id.clone(),
                canonical_name: link.canonical_name.clone(),
            });
        for key in spans_by_doc.get(link.doc_id.as_str()).into_iter().flatten() {
            if key.contains(&link.doc_id, &link.mention) {
                mentions.push(Mention {
                    entity_id: link.entity_id.clone(),
                    span: (*key).clone(),
                    source: MentionSource::Link {
                        mention: link.mention.clone(),
                        link_confidence: link.link_confidence,
                    },
                });
            }
        }
    }

    let record_refs: BTreeMap<&RecordId, &QuestionEdge> =
        edges.iter().map(|e| (&e.record_id, e)).collect();
    for m in matches
        .iter()
        .filter(|m| m.link_confidence >= options.min_link_confidence)
    {
        let Some(reference) = record_refs
            .get(&m.record_id)
            .and_then(|edge| edge.references.get(m.reference_index))
        else {
            continue;
        };
        mentions.push(Mention {
            entity_id: m.entity_id.clone(),
            span: reference.source.clone(),
            source: MentionSource::Match {
                record_id: m.record_id.clone(),
                reference_index: m.reference_index,
                similarity: m.similarity,
                via: m.via,
                link_confidence: m.link_confidence,
            },
        });
    }

    for mention in &mentions {
        entities
            .entry(mention.entity_id.clone())
            .or_insert_with(|| EntityNode {
                entity_id: mention.entity_id.clone(),
                canonical_name: mention.entity_id.to_string(),
            });
    }

    Ok(QedbGraph::from_parts(spans, entities, edges, mentions))
}

/// Summary counts for a graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub span_nodes: usize,
    pub answer_nodes: usize,
    pub reference_nodes: usize,
    pub entity_nodes: usize,
    pub edges: usize,
    pub mentions: usize,
    /// Edge arity -> number of edges.
    pub arity_histogram: BTreeMap<usize, usize>,
    pub distinct_labels: usize,
    /// Fraction of edges with at least one reference linked to an entity.
    pub question_linkable_fraction: f64,
    /// Fraction of edges whose answer span links to an entity.
    pub answer_linkable_fraction: f64,
    /// Fraction of edges with both a linked answer and a linked reference.
    pub both_linkable_fraction: f64,
}

pub fn graph_stats(graph: &QedbGraph) -> GraphStats {
    let mut stats = GraphStats {
        nodes: graph.node_count(),
        span_nodes: graph.spans.len(),
        answer_nodes: graph.spans.values().filter(|n| n.is_answer).count(),
        reference_nodes: graph.spans.values().filter(|n| n.is_reference).count(),
        entity_nodes: graph.entities.len(),
        edges: graph.edges.len(),
        mentions: graph.mentions.len(),
        distinct_labels: graph.index.by_label.len(),
        ..GraphStats::default()
    };
    let (mut question, mut answer, mut both) = (0usize, 0usize, 0usize);
    for (i, edge) in graph.edges.iter().enumerate() {
        *stats.arity_histogram.entry(edge.arity()).or_default() += 1;
        let q = graph.index.reference_entities[i].iter().any(|r| !r.is_empty());
        let a = !graph.index.answer_entities[i].is_empty();
        question += q as usize;
        answer += a as usize;
        both += (q && a) as usize;
    }
    if !graph.edges.is_empty() {
        let n = graph.edges.len() as f64;
        stats.question_linkable_fraction = question as f64 / n;
        stats.answer_linkable_fraction = answer as f64 / n;
        stats.both_linkable_fraction = both as f64 / n;
    }
    stats
}
