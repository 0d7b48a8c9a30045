//! Fixture loading, a seeded synthetic corpus generator and brute-force
//! reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use qedb::compose::{substitute_variable, JoinConstraints};
use qedb::graph::{MentionSource, QedbGraph};
use qedb::ingest::{load_corpus, Corpus, Strictness};
use qedb::linker::{is_year, jaccard_similarity, tokenize};
use qedb::model::{EntityId, EntityLink, Passage, QaRecord, RecordId, ReferencePair, Span};
use qedb::{pipeline, Config};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> Corpus {
    let dir = fixture_dir(name);
    load_corpus(
        &dir.join("passages.jsonl"),
        &dir.join("qa.jsonl"),
        Some(&dir.join("links.jsonl")),
        Strictness::Strict,
    )
    .unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn build(corpus: &Corpus) -> QedbGraph {
    pipeline::build(corpus, &Config::default()).expect("fixture builds")
}

pub const FIXTURES: &[&str] = &["fingersmith", "multidoc", "tonga", "stadium", "nobel"];

const NAMES: &[&str] = &[
    "Alpha Centauri",
    "Bravo",
    "Charlie Brown",
    "Delta",
    "Echo Park",
    "Foxtrot",
    "Golf",
    "Hotel California",
    "India",
    "Juliet",
    "Kilo",
    "Lima",
    "Mike",
    "November Rain",
    "Oscar",
    "1990",
    "2001",
];

fn entity(i: usize) -> EntityId {
    EntityId(format!("E{i:02}"))
}

/// A random but valid corpus: every passage lists a handful of names,
/// each linked (sometimes to a wrong entity), and every record asks about
/// up to three of them with another as the answer.
pub fn synthetic_corpus(seed: u64, n_records: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_passages = (n_records / 4).max(1);
    let mut passages = Vec::new();
    let mut links = Vec::new();
    let mut layouts: Vec<Vec<(usize, Span)>> = Vec::new();
    for p in 0..n_passages {
        let doc_id = format!("p{p:03}");
        let k = rng.gen_range(3..=6);
        let mut names: Vec<usize> = (0..NAMES.len()).collect();
        names.shuffle(&mut rng);
        names.truncate(k);
        let mut text = String::from("Notes:");
        let mut layout = Vec::new();
        for &n in &names {
            text.push(' ');
            let start = text.chars().count();
            text.push_str(NAMES[n]);
            let span = Span::new(start, start + NAMES[n].chars().count(), NAMES[n]);
            text.push(';');
            let linked = if rng.gen_bool(0.1) {
                rng.gen_range(0..NAMES.len())
            } else {
                n
            };
            if rng.gen_bool(0.9) {
                links.push(EntityLink {
                    doc_id: doc_id.clone(),
                    mention: span.clone(),
                    entity_id: entity(linked),
                    canonical_name: NAMES[linked].to_owned(),
                    link_confidence: f64::from(rng.gen_range(1..=10u8)) / 10.0,
                });
            }
            layout.push((n, span));
        }
        passages.push(Passage {
            doc_id,
            text,
            title: None,
        });
        layouts.push(layout);
    }

    let confidences = [0.5, 0.6, 2.0 / 3.0, 0.7, 0.9, 1.0];
    let mut records = Vec::new();
    for r in 0..n_records {
        let p = rng.gen_range(0..n_passages);
        let layout = &layouts[p];
        let answer = rng.gen_range(0..layout.len());
        let mut others: Vec<usize> = (0..layout.len()).filter(|&i| i != answer).collect();
        others.shuffle(&mut rng);
        others.truncate(rng.gen_range(0..=others.len().min(3)));
        others.sort_unstable();
        let mut question = format!("what links q{r}");
        let mut references = Vec::new();
        let mut question_entities = Vec::new();
        for &i in &others {
            let (n, d_span) = &layout[i];
            question.push_str(if references.is_empty() { " to " } else { " and " });
            let start = question.chars().count();
            let surface = NAMES[*n].to_lowercase();
            question.push_str(&surface);
            references.push(ReferencePair {
                q_span: Span::new(start, start + surface.chars().count(), surface),
                d_span: d_span.clone(),
                align_confidence: *confidences.choose(&mut rng).unwrap(),
            });
            let mut supplied = BTreeSet::new();
            if rng.gen_bool(0.05) {
                supplied.insert(entity(*n));
            }
            question_entities.push(supplied);
        }
        // the answer name occasionally leaks into the question text
        if rng.gen_bool(0.1) {
            question.push_str(" near ");
            question.push_str(&NAMES[layout[answer].0].to_lowercase());
        }
        records.push(QaRecord {
            record_id: RecordId(format!("r{r:04}")),
            question,
            doc_id: passages[p].doc_id.clone(),
            answer: layout[answer].1.clone(),
            references,
            question_entities,
        });
    }
    Corpus::from_parts(passages, records, links, Strictness::Strict).expect("synthetic corpus is valid")
}

/// A random constraint configuration around the defaults.
pub fn random_constraints(rng: &mut impl Rng) -> JoinConstraints {
    JoinConstraints {
        single_ref_q2: rng.gen_bool(0.5),
        single_answer: rng.gen_bool(0.5),
        min_align_conf_q1: *[0.0, 0.5, 2.0 / 3.0, 0.8, 1.0].choose(rng).unwrap(),
        min_align_conf_q2: *[0.0, 0.5, 2.0 / 3.0, 0.8, 1.0].choose(rng).unwrap(),
        bridge_not_year: rng.gen_bool(0.5),
        max_bridge_popularity: [None, Some(0), Some(2), Some(5), Some(20), Some(100_000)]
            .choose(rng)
            .copied()
            .unwrap(),
        q2_answer_not_in_q1: rng.gen_bool(0.5),
        mode: Default::default(),
    }
}

/// Entities attached to each edge's answer and to each of its references,
/// read straight off the mention list.
pub struct Attachments {
    pub answers: Vec<BTreeSet<EntityId>>,
    pub references: Vec<Vec<BTreeSet<EntityId>>>,
}

pub fn attachments(graph: &QedbGraph) -> Attachments {
    let mut answers = Vec::new();
    let mut references = Vec::new();
    for edge in &graph.edges {
        let mut a = BTreeSet::new();
        let mut refs = vec![BTreeSet::new(); edge.references.len()];
        for m in &graph.mentions {
            match &m.source {
                MentionSource::Link { .. } if m.span == edge.target => {
                    a.insert(m.entity_id.clone());
                }
                MentionSource::Match {
                    record_id,
                    reference_index,
                    ..
                }
                | MentionSource::Supplied {
                    record_id,
                    reference_index,
                } if record_id == &edge.record_id => {
                    refs[*reference_index].insert(m.entity_id.clone());
                }
                _ => {}
            }
        }
        answers.push(a);
        references.push(refs);
    }
    Attachments {
        answers,
        references,
    }
}

/// `(q1, q2, bridge, reference index, rendered q2)` for every pair that
/// satisfies the constraints, by a plain double loop.
pub type JoinTuple = (RecordId, RecordId, EntityId, usize, String);

pub fn brute_force_joins(graph: &QedbGraph, c: &JoinConstraints) -> BTreeSet<JoinTuple> {
    let att = attachments(graph);
    let mut answer_count: BTreeMap<&EntityId, u64> = BTreeMap::new();
    let mut reference_count: BTreeMap<&EntityId, u64> = BTreeMap::new();
    for i in 0..graph.edges.len() {
        for e in &att.answers[i] {
            *answer_count.entry(e).or_default() += 1;
        }
        let in_refs: BTreeSet<&EntityId> = att.references[i].iter().flatten().collect();
        for e in in_refs {
            *reference_count.entry(e).or_default() += 1;
        }
    }
    let mut out = BTreeSet::new();
    for (i, q1) in graph.edges.iter().enumerate() {
        for (j, q2) in graph.edges.iter().enumerate() {
            if i == j {
                continue;
            }
            if c.single_ref_q2 && q2.references.len() != 1 {
                continue;
            }
            if c.single_answer && (att.answers[i].len() != 1 || att.answers[j].len() > 1) {
                continue;
            }
            let min1 = q1.references.iter().map(|r| r.align_confidence).fold(1.0, f64::min);
            let min2 = q2.references.iter().map(|r| r.align_confidence).fold(1.0, f64::min);
            if min1 < c.min_align_conf_q1 || min2 < c.min_align_conf_q2 {
                continue;
            }
            let answer2 = graph.spans[&q2.target].text.to_lowercase();
            if c.q2_answer_not_in_q1 && q1.question.to_lowercase().contains(&answer2) {
                continue;
            }
            for bridge in &att.answers[i] {
                let name = &graph.entities[bridge].canonical_name;
                if c.bridge_not_year && is_year(name) {
                    continue;
                }
                let popularity = answer_count.get(bridge).copied().unwrap_or(0)
                    * reference_count.get(bridge).copied().unwrap_or(0);
                if c.max_bridge_popularity.is_some_and(|m| popularity > m) {
                    continue;
                }
                for (r, set) in att.references[j].iter().enumerate() {
                    if set.contains(bridge) {
                        let q = &q2.references[r].q_span;
                        let rendered = substitute_variable(&q2.question, q.start, q.end);
                        out.insert((q1.record_id.clone(), q2.record_id.clone(), bridge.clone(), r, rendered));
                    }
                }
            }
        }
    }
    out
}

/// Support counts for entities related to `entity`, recounted from the
/// mention list. Years and the entity itself are dropped.
pub fn brute_force_related(
    graph: &QedbGraph,
    entity: &EntityId,
    min_link_confidence: f64,
) -> BTreeMap<EntityId, BTreeSet<RecordId>> {
    let mut out: BTreeMap<EntityId, BTreeSet<RecordId>> = BTreeMap::new();
    for edge in &graph.edges {
        let answer_ok = graph.mentions.iter().any(|m| {
            m.entity_id == *entity
                && m.span == edge.target
                && matches!(m.source, MentionSource::Link { link_confidence, .. } if link_confidence > min_link_confidence)
        });
        if !answer_ok {
            continue;
        }
        // best confidence per related entity over this edge's references
        let mut best: BTreeMap<&EntityId, Option<f64>> = BTreeMap::new();
        for m in &graph.mentions {
            let conf = match &m.source {
                MentionSource::Match {
                    record_id,
                    link_confidence,
                    ..
                } if record_id == &edge.record_id => Some(*link_confidence),
                MentionSource::Supplied { record_id, .. } if record_id == &edge.record_id => None,
                _ => continue,
            };
            let slot = best.entry(&m.entity_id).or_insert(conf);
            *slot = match (*slot, conf) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        for (related, conf) in best {
            if related == entity || is_year(&graph.entities[related].canonical_name) {
                continue;
            }
            if conf.is_none_or(|c| c > min_link_confidence) {
                out.entry(related.clone()).or_default().insert(edge.record_id.clone());
            }
        }
    }
    out
}

/// `(record, reference, entity, similarity)` chosen by scanning every
/// reference against every link under both names.
pub fn brute_force_matches(
    corpus: &Corpus,
    min_link_confidence: f64,
) -> Vec<(RecordId, usize, EntityId, f64)> {
    let mut out = Vec::new();
    for record in &corpus.records {
        for (i, pair) in record.references.iter().enumerate() {
            let reference = tokenize(&pair.q_span.text);
            let mut scored: Vec<(f64, f64, &EntityId)> = Vec::new();
            for link in &corpus.links {
                if link.doc_id != record.doc_id || link.link_confidence < min_link_confidence {
                    continue;
                }
                for name in [&link.mention.text, &link.canonical_name] {
                    let s = jaccard_similarity(&reference, &tokenize(name));
                    scored.push((s, link.link_confidence, &link.entity_id));
                }
            }
            scored.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then(b.1.total_cmp(&a.1))
                    .then_with(|| a.2.cmp(b.2))
            });
            if let Some(&(s, _, e)) = scored.first().filter(|t| t.0 > 0.0) {
                out.push((record.record_id.clone(), i, e.clone(), s));
            }
        }
    }
    out
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ten", "vor", "sel", "du", "pha", "quin", "zor", "bel", "mar", "tis",
    "nor", "gal",
];

const TEMPLATES: &[&str] = &[
    "who wrote the novel {a}",
    "when was {a} founded",
    "what is the capital of {a}",
    "who plays {a} in {b}",
    "where was {a} born",
    "how many people live in {a}",
    "which river flows through {a}",
    "who directed the film {a}",
    "what language is spoken in {a}",
    "who is the lead singer of {a}",
    "when did {a} win the {b} cup",
    "what is the name of {a}'s first album",
];

fn made_up_name(rng: &mut impl Rng) -> String {
    (0..3).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// `n` distinct template questions over made-up names; no two share the
/// same token multiset.
pub fn question_bank(seed: u64, n: usize) -> Vec<(RecordId, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let template = TEMPLATES.choose(&mut rng).unwrap();
        let q = template
            .replace("{a}", &made_up_name(&mut rng))
            .replace("{b}", &made_up_name(&mut rng));
        let mut key = tokenize(&q);
        key.sort();
        if seen.insert(key) {
            out.push((RecordId(format!("q{:04}", out.len())), q));
        }
    }
    out
}

/// BM25 computed directly from token lists, without an index.
pub fn naive_bm25(docs: &[Vec<String>], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for t in &terms {
                let tf = doc.iter().filter(|w| *w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avg));
            }
            score
        })
        .collect()
}
