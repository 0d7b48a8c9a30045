//! Associates linked passage entities with question references.
//!
//! An entity `e` linked in the source passage is attached to question
//! reference `r` when no other entity linked in the same passage is more
//! similar to `r`. Similarity is token Jaccard, taken as the larger of the
//! scores against the entity's surface form in the passage and its
//! canonical name.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::Corpus;
use crate::model::{EntityId, EntityLink, QaRecord, RecordId};

/// Lowercases `text` and splits it on anything that is not alphanumeric.
///
/// ```
/// assert_eq!(qedb::linker::tokenize("Tipping the Velvet"), ["tipping", "the", "velvet"]);
/// assert_eq!(qedb::linker::tokenize("lucretius's book"), ["lucretius", "s", "book"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `|A ∩ B| / |A ∪ B|` over token sets; two empty inputs score 1.0.
pub fn jaccard_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// True for strings that read as a year in `[1000, 2999]` after trimming.
pub fn is_year(text: &str) -> bool {
    let t = text.trim();
    (3..=4).contains(&t.len())
        && t.bytes().all(|b| b.is_ascii_digit())
        && t.parse::<u32>().is_ok_and(|y| (1000..=2999).contains(&y))
}

/// Which of an entity's strings produced the best similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchVia {
    SurfaceForm,
    CanonicalName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntityMatch {
    pub record_id: RecordId,
    pub reference_index: usize,
    pub entity_id: EntityId,
    pub similarity: f64,
    pub via: MatchVia,
    /// Confidence of the link that achieved `similarity`.
    pub link_confidence: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    entity: &'a EntityId,
    similarity: f64,
    via: MatchVia,
    link_confidence: f64,
}

impl Candidate<'_> {
    /// Ordering used to pick a winner: similarity, then link confidence,
    /// then the smaller entity id.
    fn beats(&self, other: &Candidate<'_>) -> bool {
        match self.similarity.total_cmp(&other.similarity) {
            std::cmp::Ordering::Equal => {}
            ord => return ord.is_gt(),
        }
        match self.link_confidence.total_cmp(&other.link_confidence) {
            std::cmp::Ordering::Equal => {}
            ord => return ord.is_gt(),
        }
        self.entity < other.entity
    }
}

fn score_link<'a>(reference: &[String], link: &'a EntityLink) -> Candidate<'a> {
    let surface = jaccard_similarity(reference, &tokenize(&link.mention.text));
    let canonical = jaccard_similarity(reference, &tokenize(&link.canonical_name));
    let (similarity, via) = if canonical > surface {
        (canonical, MatchVia::CanonicalName)
    } else {
        (surface, MatchVia::SurfaceForm)
    };
    Candidate {
        entity: &link.entity_id,
        similarity,
        via,
        link_confidence: link.link_confidence,
    }
}

/// Picks at most one entity per question reference of `record`.
///
/// Only links with `link_confidence >= min_link_confidence` compete. A
/// reference whose best similarity is zero gets no match.
pub fn match_entities_to_references(
    record: &QaRecord,
    passage_links: &[EntityLink],
    min_link_confidence: f64,
) -> Vec<ReferenceEntityMatch> {
    let eligible: Vec<&EntityLink> = passage_links
        .iter()
        .filter(|l| l.link_confidence >= min_link_confidence)
        .collect();
    let mut out = Vec::new();
    for (i, pair) in record.references.iter().enumerate() {
        let reference = tokenize(&pair.q_span.text);
        let mut best: Option<Candidate> = None;
        for link in &eligible {
            let candidate = score_link(&reference, link);
            if best.as_ref().is_none_or(|b| candidate.beats(b)) {
                best = Some(candidate);
            }
        }
        if let Some(best) = best.filter(|b| b.similarity > 0.0) {
            out.push(ReferenceEntityMatch {
                record_id: record.record_id.clone(),
                reference_index: i,
                entity_id: best.entity.clone(),
                similarity: best.similarity,
                via: best.via,
                link_confidence: best.link_confidence,
            });
        }
    }
    out
}

/// Thresholds for [`match_corpus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions {
    pub min_link_confidence: f64,
    /// Matches scoring below this Jaccard similarity are discarded.
    pub min_match_similarity: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            min_link_confidence: 0.25,
            min_match_similarity: 0.0,
        }
    }
}

/// Runs [`match_entities_to_references`] over every record of a corpus,
/// in record order.
pub fn match_corpus(corpus: &Corpus, options: MatchOptions) -> Vec<ReferenceEntityMatch> {
    let mut by_doc: BTreeMap<&str, Vec<EntityLink>> = BTreeMap::new();
    for link in &corpus.links {
        by_doc.entry(link.doc_id.as_str()).or_default().push(link.clone());
    }
    corpus
        .records
        .iter()
        .flat_map(|record| {
            let links = by_doc.get(record.doc_id.as_str()).map_or(&[][..], Vec::as_slice);
            match_entities_to_references(record, links, options.min_link_confidence)
        })
        .filter(|m| m.similarity >= options.min_match_similarity)
        .collect()
}
