//! Compositional queries over a built graph.
//!
//! * [`related_entities`]: entities that appear as question references in
//!   questions whose answer links to a query entity.
//! * [`enumerate_bridge_joins`]: two-hop questions where the answer of `q1`
//!   is a question reference in `q2`, rendered in a QDMR-like format.
//! * [`frame_query`]: every question in which an entity is a reference,
//!   grouped by abstracted question.
//! * [`shared_answer_query`]: pairs of distinct questions with the same
//!   answer entity.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::graph::{QedbGraph, QuestionEdge};
use crate::linker::{is_year, jaccard_similarity, tokenize};
use crate::model::{EntityId, RecordId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelatedEntity {
    pub query_entity: EntityId,
    pub related_entity: EntityId,
    pub related_name: String,
    /// Number of questions linking the two entities.
    pub support: usize,
    pub example_record: RecordId,
    pub example_question: String,
}

/// Ranks entities `e'` by the number of questions whose answer links to
/// `entity` and which have a question reference linked to `e'`.
///
/// Both links must have confidence strictly above `min_link_confidence`.
/// Year-like entities and `entity` itself are skipped. Ties are broken by
/// entity id; the example question is the supporter with the smallest
/// record id.
pub fn related_entities(
    graph: &QedbGraph,
    entity: &EntityId,
    k: usize,
    min_link_confidence: f64,
) -> Vec<RelatedEntity> {
    let mut support: BTreeMap<&EntityId, BTreeSet<usize>> = BTreeMap::new();
    for i in graph.edges_answering(entity) {
        let answer_ok = graph.index.answer_entities[i]
            .iter()
            .any(|a| &a.entity_id == entity && a.passes(min_link_confidence, true));
        if !answer_ok {
            continue;
        }
        for annotation in graph.index.reference_entities[i].iter().flatten() {
            let related = &annotation.entity_id;
            if related == entity
                || !annotation.passes(min_link_confidence, true)
                || is_year(graph.entity_name(related))
            {
                continue;
            }
            support.entry(related).or_default().insert(i);
        }
    }
    let mut ranked: Vec<_> = support.into_iter().collect();
    ranked.sort_by(|(a, sa), (b, sb)| sb.len().cmp(&sa.len()).then_with(|| a.cmp(b)));
    ranked
        .into_iter()
        .take(k)
        .map(|(related, edges)| {
            // edges are sorted by record id, so the first supporter is the smallest
            let example = &graph.edges[*edges.first().expect("support is non-empty")];
            RelatedEntity {
                query_entity: entity.clone(),
                related_entity: related.clone(),
                related_name: graph.entity_name(related).to_owned(),
                support: edges.len(),
                example_record: example.record_id.clone(),
                example_question: example.question.clone(),
            }
        })
        .collect()
}

/// How `q1`'s answer is matched to a reference of `q2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeMode {
    /// The answer's linked entity equals an entity associated with the reference.
    #[default]
    Entity,
    /// Normalized answer text equals normalized reference text; for corpora
    /// without entity links. Bridges get synthetic ids `text:<normalized>`.
    Text,
}

/// Filters applied by [`enumerate_bridge_joins`]. Defaults enable every
/// filter, which keeps only clean, readable two-hop pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct JoinConstraints {
    /// `q2` has exactly one question reference.
    pub single_ref_q2: bool,
    /// `q1` has exactly one answer entity and `q2` at most one.
    pub single_answer: bool,
    /// Minimum alignment confidence over all references of `q1`.
    pub min_align_conf_q1: f64,
    /// Minimum alignment confidence over all references of `q2`.
    pub min_align_conf_q2: f64,
    pub bridge_not_year: bool,
    /// Upper bound on `answer_count(e) * reference_count(e)`.
    pub max_bridge_popularity: Option<u64>,
    /// `q2`'s answer must not occur (case-insensitively) in `q1`.
    pub q2_answer_not_in_q1: bool,
    pub mode: BridgeMode,
}

impl Default for JoinConstraints {
    fn default() -> Self {
        Self {
            single_ref_q2: true,
            single_answer: true,
            min_align_conf_q1: 2.0 / 3.0,
            min_align_conf_q2: 2.0 / 3.0,
            bridge_not_year: true,
            max_bridge_popularity: Some(100_000),
            q2_answer_not_in_q1: true,
            mode: BridgeMode::Entity,
        }
    }
}

impl JoinConstraints {
    /// Every filter disabled except `q1 != q2`.
    pub fn unconstrained() -> Self {
        Self {
            single_ref_q2: false,
            single_answer: false,
            min_align_conf_q1: 0.0,
            min_align_conf_q2: 0.0,
            bridge_not_year: false,
            max_bridge_popularity: None,
            q2_answer_not_in_q1: false,
            mode: BridgeMode::Entity,
        }
    }

    pub fn with_min_align_conf(mut self, value: f64) -> Self {
        self.min_align_conf_q1 = value;
        self.min_align_conf_q2 = value;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BridgeJoin {
    pub q1: RecordId,
    pub q2: RecordId,
    pub bridge_entity: EntityId,
    pub bridge_name: String,
    /// Reference of `q2` that carries the bridge.
    pub bridge_ref_index: usize,
    /// `q1` verbatim.
    pub question_1: String,
    /// `q2` with the bridge reference replaced by `$1`.
    pub question_2: String,
    /// `q2`'s answer text.
    pub answer: String,
}

/// Replaces characters `[start, end)` of `question` with `$1`.
pub fn substitute_variable(question: &str, start: usize, end: usize) -> String {
    let head: String = question.chars().take(start).collect();
    let tail: String = question.chars().skip(end).collect();
    format!("{head}$1{tail}")
}

/// Two-line rendering: `q1`, then `q2` with the bridge mention as `$1`.
///
/// ```
/// # use qedb::compose::{render_bridge, BridgeJoin};
/// let join = BridgeJoin {
///     q1: "a".into(),
///     q2: "b".into(),
///     bridge_entity: "Q47160".into(),
///     bridge_name: "Lucretius".into(),
///     bridge_ref_index: 0,
///     question_1: "who was the roman proponent of hedonism".into(),
///     question_2: "what is the name of $1's book on atomism".into(),
///     answer: "On the Nature of Things".into(),
/// };
/// assert_eq!(
///     render_bridge(&join),
///     "who was the roman proponent of hedonism\nwhat is the name of $1's book on atomism"
/// );
/// ```
pub fn render_bridge(join: &BridgeJoin) -> String {
    format!("{}\n{}", join.question_1, join.question_2)
}

/// Lowercased, whitespace-collapsed text used as a bridge key in text mode.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Per-edge bridge keys, resolved once for the chosen mode.
struct Keys {
    answers: Vec<Vec<EntityId>>,
    references: Vec<Vec<Vec<EntityId>>>,
    names: BTreeMap<EntityId, String>,
    answer_edges: BTreeMap<EntityId, BTreeSet<usize>>,
    reference_edges: BTreeMap<EntityId, BTreeSet<usize>>,
}

impl Keys {
    fn resolve(graph: &QedbGraph, mode: BridgeMode) -> Keys {
        let mut keys = Keys {
            answers: Vec::with_capacity(graph.edges.len()),
            references: Vec::with_capacity(graph.edges.len()),
            names: BTreeMap::new(),
            answer_edges: BTreeMap::new(),
            reference_edges: BTreeMap::new(),
        };
        for (i, edge) in graph.edges.iter().enumerate() {
            let (answers, references) = match mode {
                BridgeMode::Entity => (
                    graph.index.answer_entities[i]
                        .iter()
                        .map(|a| a.entity_id.clone())
                        .collect::<Vec<_>>(),
                    graph.index.reference_entities[i]
                        .iter()
                        .map(|r| r.iter().map(|a| a.entity_id.clone()).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                ),
                BridgeMode::Text => {
                    let answer = graph.answer_text(edge);
                    let key = EntityId(format!("text:{}", normalize_text(answer)));
                    keys.names.entry(key.clone()).or_insert_with(|| answer.to_owned());
                    (
                        vec![key],
                        edge.references
                            .iter()
                            .map(|r| vec![EntityId(format!("text:{}", normalize_text(&r.q_span.text)))])
                            .collect(),
                    )
                }
            };
            for e in &answers {
                keys.answer_edges.entry(e.clone()).or_default().insert(i);
            }
            for e in references.iter().flatten() {
                keys.reference_edges.entry(e.clone()).or_default().insert(i);
            }
            keys.answers.push(answers);
            keys.references.push(references);
        }
        if mode == BridgeMode::Entity {
            for e in keys.answer_edges.keys() {
                keys.names.insert(e.clone(), graph.entity_name(e).to_owned());
            }
        }
        keys
    }

    fn popularity(&self, e: &EntityId) -> u64 {
        let a = self.answer_edges.get(e).map_or(0, BTreeSet::len) as u64;
        let r = self.reference_edges.get(e).map_or(0, BTreeSet::len) as u64;
        a * r
    }
}

fn edge_ok_as_q2(edge: &QuestionEdge, answers: usize, c: &JoinConstraints) -> bool {
    (!c.single_ref_q2 || edge.arity() == 1)
        && (!c.single_answer || answers <= 1)
        && edge.min_align_confidence >= c.min_align_conf_q2
}

/// Yields every `(q1, q2)` pair satisfying `constraints`, ordered by
/// `q1` record id, then `q2` record id, then bridge reference index.
pub fn enumerate_bridge_joins<'g>(
    graph: &'g QedbGraph,
    constraints: JoinConstraints,
) -> impl Iterator<Item = BridgeJoin> + 'g {
    let keys = Keys::resolve(graph, constraints.mode);
    let c = constraints;
    (0..graph.edges.len()).flat_map(move |i| {
        let q1 = &graph.edges[i];
        let mut joins = Vec::new();
        let q1_answers = &keys.answers[i];
        let q1_ok = (!c.single_answer || q1_answers.len() == 1)
            && q1.min_align_confidence >= c.min_align_conf_q1;
        if q1_ok {
            let q1_lower = q1.question.to_lowercase();
            for bridge in q1_answers {
                let name = keys.names.get(bridge).map_or(bridge.as_str(), String::as_str);
                if c.bridge_not_year && is_year(name) {
                    continue;
                }
                if c.max_bridge_popularity.is_some_and(|max| keys.popularity(bridge) > max) {
                    continue;
                }
                for &j in keys.reference_edges.get(bridge).into_iter().flatten() {
                    if j == i {
                        continue;
                    }
                    let q2 = &graph.edges[j];
                    if !edge_ok_as_q2(q2, keys.answers[j].len(), &c) {
                        continue;
                    }
                    let answer = graph.answer_text(q2);
                    if c.q2_answer_not_in_q1 && q1_lower.contains(&answer.to_lowercase()) {
                        continue;
                    }
                    for (r, entities) in keys.references[j].iter().enumerate() {
                        if !entities.contains(bridge) {
                            continue;
                        }
                        let q_span = &q2.references[r].q_span;
                        let rendered = substitute_variable(&q2.question, q_span.start, q_span.end);
                        if rendered.matches("$1").count() != 1 {
                            continue;
                        }
                        joins.push(BridgeJoin {
                            q1: q1.record_id.clone(),
                            q2: q2.record_id.clone(),
                            bridge_entity: bridge.clone(),
                            bridge_name: name.to_owned(),
                            bridge_ref_index: r,
                            question_1: q1.question.clone(),
                            question_2: rendered,
                            answer: answer.to_owned(),
                        });
                    }
                }
            }
        }
        joins.sort_by(|a, b| {
            a.q2.cmp(&b.q2)
                .then(a.bridge_ref_index.cmp(&b.bridge_ref_index))
                .then_with(|| a.bridge_entity.cmp(&b.bridge_entity))
        });
        joins
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameEntry {
    pub record_id: RecordId,
    pub question: String,
    pub answer: String,
}

/// Questions sharing one abstracted label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameGroup {
    pub label: String,
    pub entries: Vec<FrameEntry>,
}

/// All questions in which `entity` is a question reference, grouped by
/// label (sorted), entries sorted by record id.
pub fn frame_query(graph: &QedbGraph, entity: &EntityId) -> Vec<FrameGroup> {
    let mut groups: BTreeMap<&str, Vec<FrameEntry>> = BTreeMap::new();
    for i in graph.edges_referencing(entity) {
        let edge = &graph.edges[i];
        groups.entry(&edge.label).or_default().push(FrameEntry {
            record_id: edge.record_id.clone(),
            question: edge.question.clone(),
            answer: graph.answer_text(edge).to_owned(),
        });
    }
    groups
        .into_iter()
        .map(|(label, entries)| FrameGroup {
            label: label.to_owned(),
            entries,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedAnswerPair {
    pub entity: EntityId,
    pub q1: RecordId,
    pub q2: RecordId,
    pub question_1: String,
    pub question_2: String,
    /// Token Jaccard similarity of the two questions.
    pub similarity: f64,
}

/// Unordered pairs of questions whose answers both link to `entity` and
/// whose token Jaccard similarity is below `distinctness_threshold`.
pub fn shared_answer_query(
    graph: &QedbGraph,
    entity: &EntityId,
    distinctness_threshold: f64,
) -> Vec<SharedAnswerPair> {
    let edges: Vec<usize> = graph.edges_answering(entity).collect();
    let tokens: Vec<Vec<String>> = edges
        .iter()
        .map(|&i| tokenize(&graph.edges[i].question))
        .collect();
    let mut out = Vec::new();
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            let similarity = jaccard_similarity(&tokens[a], &tokens[b]);
            if similarity < distinctness_threshold {
                let (e1, e2) = (&graph.edges[edges[a]], &graph.edges[edges[b]]);
                out.push(SharedAnswerPair {
                    entity: entity.clone(),
                    q1: e1.record_id.clone(),
                    q2: e2.record_id.clone(),
                    question_1: e1.question.clone(),
                    question_2: e2.question.clone(),
                    similarity,
                });
            }
        }
    }
    out
}
