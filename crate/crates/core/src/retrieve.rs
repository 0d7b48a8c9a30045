//! One-hop question answering by question similarity, plus span metrics.
//!
//! [`Bm25Index`] scores stored questions against a query with Okapi BM25:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! Query terms are deduplicated before scoring. Tokenization is shared
//! with the linker.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::graph::QedbGraph;
use crate::linker::tokenize;
use crate::model::{QaRecord, RecordId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posting {
    /// Position of the document in [`Bm25Index::docs`].
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDoc {
    pub record_id: RecordId,
    pub length: usize,
}

/// Inverted index over question texts.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub docs: Vec<IndexedDoc>,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub avg_length: f64,
}

/// A retrieved question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub record_id: RecordId,
    pub score: f64,
}

/// Anything that can rank stored questions against a query.
pub trait QuestionRetriever {
    fn retrieve(&self, query: &str, top_k: usize) -> Vec<ScoredRecord>;
}

impl Bm25Index {
    /// Indexes `(record_id, question)` pairs in the given order.
    pub fn build<'a, I>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (&'a RecordId, &'a str)>,
    {
        let mut indexed = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut total = 0usize;
        for (doc, (record_id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            total += tokens.len();
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens.iter() {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
            indexed.push(IndexedDoc {
                record_id: record_id.clone(),
                length: tokens.len(),
            });
        }
        let avg_length = if indexed.is_empty() {
            0.0
        } else {
            total as f64 / indexed.len() as f64
        };
        Bm25Index {
            params,
            docs: indexed,
            postings,
            avg_length,
        }
    }

    /// Indexes every edge question of a graph.
    pub fn from_graph(graph: &QedbGraph, params: Bm25Params) -> Self {
        Self::build(
            graph.edges.iter().map(|e| (&e.record_id, e.question.as_str())),
            params,
        )
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores every document sharing at least one term with `query`.
    pub fn score_all(&self, query: &str) -> Vec<ScoredRecord> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for p in list {
                let len = self.docs[p.doc].length as f64;
                let tf = p.tf as f64;
                let norm = k1 * (1.0 - b + b * len / self.avg_length);
                *scores.entry(p.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut out: Vec<ScoredRecord> = scores
            .into_iter()
            .map(|(doc, score)| ScoredRecord {
                record_id: self.docs[doc].record_id.clone(),
                score,
            })
            .collect();
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        out
    }
}

impl QuestionRetriever for Bm25Index {
    fn retrieve(&self, query: &str, top_k: usize) -> Vec<ScoredRecord> {
        let mut all = self.score_all(query);
        all.truncate(top_k);
        all
    }
}

/// Indexes the questions of `records`.
pub fn build_index(records: &[QaRecord], k1: f64, b: f64) -> Bm25Index {
    Bm25Index::build(
        records.iter().map(|r| (&r.record_id, r.question.as_str())),
        Bm25Params { k1, b },
    )
}

/// Top `top_k` stored questions for `query`, best first, ties by record id.
pub fn retrieve_similar(index: &Bm25Index, query: &str, top_k: usize) -> Vec<ScoredRecord> {
    index.retrieve(query, top_k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneHopAnswer {
    pub answer: String,
    pub record_id: RecordId,
    /// The stored question that supplied the answer.
    pub question: String,
    pub score: f64,
}

/// Lowercased, trimmed answer text; answers equal under this are merged.
pub fn normalize_answer(text: &str) -> String {
    text.trim().to_lowercase()
}

/// Retrieves similar questions and reads their answers off the graph.
/// Retrieved records with the same normalized answer collapse into the
/// highest-scoring one.
pub fn answer_one_hop<R: QuestionRetriever + ?Sized>(
    graph: &QedbGraph,
    retriever: &R,
    query: &str,
    top_k: usize,
) -> Vec<OneHopAnswer> {
    let mut out: Vec<OneHopAnswer> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for hit in retriever.retrieve(query, top_k) {
        let Some(edge) = graph.edge(hit.record_id.as_str()) else { continue };
        let answer = graph.answer_text(edge);
        let key = normalize_answer(answer);
        // hits arrive best first, so the first occurrence keeps the max score
        if seen.contains_key(&key) {
            continue;
        }
        seen.insert(key, out.len());
        out.push(OneHopAnswer {
            answer: answer.to_owned(),
            record_id: hit.record_id,
            question: edge.question.clone(),
            score: hit.score,
        });
    }
    out
}

/// Exact match and token F1 between predicted and gold span lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanScores {
    /// 1 when the normalized multisets are equal, else 0.
    pub exact_match: u8,
    pub f1: f64,
}

/// Token-level F1 between two strings, counting repeated tokens.
pub fn token_f1(predicted: &str, gold: &str) -> f64 {
    let p = tokenize(predicted);
    let g = tokenize(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Largest total weight of a one-to-one assignment between rows and columns.
fn best_assignment(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // bitmask over the smaller side
    if cols > rows {
        let transposed: Vec<Vec<f64>> =
            (0..cols).map(|c| (0..rows).map(|r| weights[r][c]).collect()).collect();
        return best_assignment(&transposed);
    }
    if cols > 16 {
        return greedy_assignment(weights);
    }
    let mut dp = vec![f64::NEG_INFINITY; 1 << cols];
    dp[0] = 0.0;
    for row in weights {
        let mut next = dp.clone();
        for (mask, &best) in dp.iter().enumerate() {
            if best == f64::NEG_INFINITY {
                continue;
            }
            for (c, &w) in row.iter().enumerate() {
                if mask & (1 << c) == 0 {
                    let m = mask | (1 << c);
                    next[m] = next[m].max(best + w);
                }
            }
        }
        dp = next;
    }
    dp.into_iter().fold(0.0, f64::max)
}

fn greedy_assignment(weights: &[Vec<f64>]) -> f64 {
    let mut cells: Vec<(f64, usize, usize)> = weights
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &w)| (w, r, c)))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut used_r = vec![false; weights.len()];
    let mut used_c = vec![false; weights[0].len()];
    let mut total = 0.0;
    for (w, r, c) in cells {
        if !used_r[r] && !used_c[c] {
            used_r[r] = true;
            used_c[c] = true;
            total += w;
        }
    }
    total
}

/// Scores predicted spans against gold spans.
///
/// Texts are lowercased and trimmed. F1 pairs predicted and gold spans
/// one-to-one so as to maximize total token F1, then divides by the larger
/// list length; unpaired spans contribute zero.
///
/// ```
/// use qedb::retrieve::em_f1;
/// let s = em_f1(&["Tipping the Velvet"], &["the tv series tipping the velvet"]);
/// assert_eq!(s.exact_match, 0);
/// assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
/// ```
pub fn em_f1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> SpanScores {
    let norm = |s: &str| s.trim().to_lowercase();
    let mut p: Vec<String> = predicted.iter().map(|s| norm(s.as_ref())).collect();
    let mut g: Vec<String> = gold.iter().map(|s| norm(s.as_ref())).collect();
    p.sort();
    g.sort();
    let exact_match = u8::from(p == g);
    if p.is_empty() && g.is_empty() {
        return SpanScores {
            exact_match,
            f1: 1.0,
        };
    }
    let weights: Vec<Vec<f64>> = p
        .iter()
        .map(|ps| g.iter().map(|gs| token_f1(ps, gs)).collect())
        .collect();
    let f1 = best_assignment(&weights) / p.len().max(g.len()) as f64;
    SpanScores { exact_match, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index_of(questions: &[&str]) -> (Vec<RecordId>, Bm25Index) {
        let ids: Vec<RecordId> = (0..questions.len()).map(|i| RecordId(format!("r{i:03}"))).collect();
        let index = Bm25Index::build(
            ids.iter().zip(questions.iter().copied()),
            Bm25Params::default(),
        );
        (ids, index)
    }

    #[test]
    fn empty_index_returns_nothing() {
        let index = build_index(&[], 1.2, 0.75);
        assert!(index.is_empty());
        assert!(retrieve_similar(&index, "anything", 5).is_empty());
    }

    #[test]
    fn postings_and_lengths() {
        let (_, index) = index_of(&["what is the tv series tipping the velvet based on", "who plays kitty in tipping the velvet"]);
        assert_eq!(index.postings["tipping"].len(), 2);
        assert_eq!(index.postings["the"][0].tf, 2);
        assert_eq!(index.docs[0].length, 10);
        assert!((index.avg_length - 8.5).abs() < 1e-12);
    }

    #[test]
    fn no_shared_tokens_gives_empty_result() {
        let (_, index) = index_of(&["who plays kitty in tipping the velvet"]);
        assert!(retrieve_similar(&index, "zebra quantum", 3).is_empty());
    }

    #[test]
    fn top_k_and_ordering() {
        let (ids, index) = index_of(&[
            "who got the first nobel prize in physics",
            "who won the nobel prize in chemistry",
            "what is the capital of tonga",
        ]);
        let hits = retrieve_similar(&index, "who got the first nobel prize in physics", 2);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].record_id, ids[0]);
        assert!(hits[0].score > hits[1].score);
    }

    #[test]
    fn ties_break_by_record_id() {
        let (ids, index) = index_of(&["alpha beta", "alpha beta"]);
        let hits = retrieve_similar(&index, "alpha", 5);
        assert_eq!(hits[0].score, hits[1].score);
        assert_eq!(hits[0].record_id, ids[0]);
    }

    #[test]
    fn token_f1_counts_repeats() {
        assert!((token_f1("Tipping the Velvet", "the tv series tipping the velvet") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_f1("fiji", "tonga"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
    }

    #[test]
    fn em_f1_cases() {
        let s = em_f1(&["Kitty Butler", "Tipping the Velvet"], &["tipping the velvet ", "kitty butler"]);
        assert_eq!(s, SpanScores { exact_match: 1, f1: 1.0 });
        let s = em_f1::<&str, &str>(&[], &["x"]);
        assert_eq!(s, SpanScores { exact_match: 0, f1: 0.0 });
        let s = em_f1::<&str, &str>(&[], &[]);
        assert_eq!(s, SpanScores { exact_match: 1, f1: 1.0 });
        // one correct span out of two gold spans
        let s = em_f1(&["kitty butler"], &["kitty butler", "nan astley"]);
        assert_eq!(s.exact_match, 0);
        assert!((s.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn assignment_prefers_global_optimum() {
        // greedy would take 0.9 and leave 0.0; the optimum pairs 0.8 + 0.8
        let w = vec![vec![0.9, 0.8], vec![0.8, 0.0]];
        assert!((best_assignment(&w) - 1.6).abs() < 1e-12);
        assert!((greedy_assignment(&w) - 0.9).abs() < 1e-12);
    }
}
