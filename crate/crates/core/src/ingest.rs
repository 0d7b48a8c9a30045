//! Line-delimited JSON input: passages, QA records and entity links.
//!
//! Each input file holds one JSON object per line; blank lines are skipped.
//! Line numbers in errors are 1-based physical line numbers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    char_len, validate_record, EntityId, EntityLink, Passage, QaRecord, RecordId, ReferencePair,
    Span,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {field}: {message}")]
    InvalidSpan {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate doc_id {doc_id:?}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("line {line}: duplicate record_id {record_id:?}")]
    DuplicateRecordId { line: usize, record_id: String },
    #[error("line {line}: unknown doc_id {doc_id:?}")]
    UnknownDocId { line: usize, doc_id: String },
    #[error("line {line}: record {record_id} failed validation: {details}")]
    InvalidRecord {
        line: usize,
        record_id: String,
        details: String,
    },
    #[error("line {line}: link to {entity_id} failed validation: {details}")]
    InvalidLink {
        line: usize,
        entity_id: String,
        details: String,
    },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    fn in_file(self, path: &Path) -> Self {
        IngestError::File {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

/// How [`load_corpus`] treats records and links that fail validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Any invalid record or link aborts the load.
    #[default]
    Strict,
    /// Invalid records and links are dropped and counted.
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct LoadStats {
    pub records_accepted: usize,
    pub records_rejected: usize,
    pub links_accepted: usize,
    pub links_rejected: usize,
    /// Subset of `links_rejected` whose mention fell outside the passage.
    pub links_out_of_bounds: usize,
}

/// Validated inputs ready for graph construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub passages: BTreeMap<String, Passage>,
    pub records: Vec<QaRecord>,
    pub links: Vec<EntityLink>,
    pub stats: LoadStats,
    /// One message per dropped item, in input order.
    pub diagnostics: Vec<String>,
}

#[derive(Deserialize)]
struct RawSpan {
    start: i64,
    end: i64,
    text: String,
}

#[derive(Deserialize)]
struct RawReference {
    q_span: RawSpan,
    d_span: RawSpan,
    #[serde(default)]
    align_confidence: Option<f64>,
}

#[derive(Deserialize)]
struct RawRecord {
    record_id: String,
    doc_id: String,
    question: String,
    answer: RawSpan,
    #[serde(default)]
    references: Vec<RawReference>,
    #[serde(default)]
    question_entities: Option<Vec<Vec<String>>>,
}

#[derive(Deserialize)]
struct RawLink {
    doc_id: String,
    mention: RawSpan,
    entity_id: String,
    canonical_name: String,
    link_confidence: f64,
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str, line: usize) -> Result<T, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Malformed {
        line,
        message: e.to_string(),
    })
}

fn convert_span(raw: RawSpan, line: usize, field: &str) -> Result<Span, IngestError> {
    let invalid = |message: String| IngestError::InvalidSpan {
        line,
        field: field.to_owned(),
        message,
    };
    if raw.start < 0 || raw.end < 0 {
        return Err(invalid(format!(
            "negative offset ({}, {})",
            raw.start, raw.end
        )));
    }
    if raw.start >= raw.end {
        return Err(invalid(format!(
            "start {} must be less than end {}",
            raw.start, raw.end
        )));
    }
    Ok(Span::new(raw.start as usize, raw.end as usize, raw.text))
}

/// Yields `(line_number, trimmed_line)` for every non-blank line.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = io::Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(e)),
        })
}

pub fn parse_passage_line(text: &str, line: usize) -> Result<Passage, IngestError> {
    parse_json(text, line)
}

/// Parses a passages file. Duplicate doc ids are an error.
pub fn parse_passages<R: BufRead>(reader: R) -> Result<Vec<Passage>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (line, text) = item?;
        let passage = parse_passage_line(&text, line)?;
        if !seen.insert(passage.doc_id.clone()) {
            return Err(IngestError::DuplicateDocId {
                line,
                doc_id: passage.doc_id,
            });
        }
        out.push(passage);
    }
    Ok(out)
}

/// Decodes one QA-record line. Missing `align_confidence` defaults to 1.0
/// and missing `question_entities` to one empty set per reference.
pub fn parse_qa_line(text: &str, line: usize) -> Result<QaRecord, IngestError> {
    let raw: RawRecord = parse_json(text, line)?;
    let answer = convert_span(raw.answer, line, "answer")?;
    let references = raw
        .references
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(ReferencePair {
                q_span: convert_span(r.q_span, line, &format!("references[{i}].q_span"))?,
                d_span: convert_span(r.d_span, line, &format!("references[{i}].d_span"))?,
                align_confidence: r.align_confidence.unwrap_or(1.0),
            })
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    let question_entities = match raw.question_entities {
        Some(sets) => sets
            .into_iter()
            .map(|set| set.into_iter().map(EntityId::from).collect::<BTreeSet<_>>())
            .collect(),
        None => vec![BTreeSet::new(); references.len()],
    };
    Ok(QaRecord {
        record_id: RecordId::from(raw.record_id),
        question: raw.question,
        doc_id: raw.doc_id,
        answer,
        references,
        question_entities,
    })
}

/// Parses a QA-record file, stopping at the first malformed line.
pub fn parse_qa_records<R: BufRead>(reader: R) -> Result<Vec<QaRecord>, IngestError> {
    numbered_lines(reader)
        .map(|item| {
            let (line, text) = item?;
            parse_qa_line(&text, line)
        })
        .collect()
}

/// Serializes a record in the QA-file line format.
pub fn encode_record(record: &QaRecord) -> String {
    serde_json::to_string(record).expect("QaRecord serializes to JSON")
}

pub fn parse_link_line(text: &str, line: usize) -> Result<EntityLink, IngestError> {
    let raw: RawLink = parse_json(text, line)?;
    Ok(EntityLink {
        doc_id: raw.doc_id,
        mention: convert_span(raw.mention, line, "mention")?,
        entity_id: EntityId::from(raw.entity_id),
        canonical_name: raw.canonical_name,
        link_confidence: raw.link_confidence,
    })
}

pub fn parse_links<R: BufRead>(reader: R) -> Result<Vec<EntityLink>, IngestError> {
    numbered_lines(reader)
        .map(|item| {
            let (line, text) = item?;
            parse_link_line(&text, line)
        })
        .collect()
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| IngestError::from(e).in_file(path))
}

/// Parse results paired with their 1-based line numbers.
type NumberedResults<T> = Vec<(usize, Result<T, IngestError>)>;

fn collect_lines<R: BufRead, T>(
    reader: R,
    parse: impl Fn(&str, usize) -> Result<T, IngestError>,
) -> Result<NumberedResults<T>, IngestError> {
    numbered_lines(reader)
        .map(|item| {
            let (line, text) = item?;
            Ok((line, parse(&text, line)))
        })
        .collect()
}

/// Reads and validates the three input files. `links_path` may be `None`
/// when no entity links are available.
pub fn load_corpus(
    passages_path: &Path,
    records_path: &Path,
    links_path: Option<&Path>,
    strictness: Strictness,
) -> Result<Corpus, IngestError> {
    let passages = parse_passages(open(passages_path)?).map_err(|e| e.in_file(passages_path))?;
    let records = collect_lines(open(records_path)?, parse_qa_line)
        .map_err(|e| e.in_file(records_path))?;
    let links = match links_path {
        Some(path) => collect_lines(open(path)?, parse_link_line).map_err(|e| e.in_file(path))?,
        None => Vec::new(),
    };
    assemble(passages, records, links, strictness).map_err(|(e, which)| match which {
        Source::Records => e.in_file(records_path),
        Source::Links => e.in_file(links_path.expect("link errors imply a links file")),
    })
}

enum Source {
    Records,
    Links,
}

impl Corpus {
    /// Validates in-memory inputs exactly as [`load_corpus`] would; the
    /// position of an item in its list stands in for its line number.
    pub fn from_parts(
        passages: Vec<Passage>,
        records: Vec<QaRecord>,
        links: Vec<EntityLink>,
        strictness: Strictness,
    ) -> Result<Corpus, IngestError> {
        let mut seen = HashSet::new();
        for (i, p) in passages.iter().enumerate() {
            if !seen.insert(p.doc_id.clone()) {
                return Err(IngestError::DuplicateDocId {
                    line: i + 1,
                    doc_id: p.doc_id.clone(),
                });
            }
        }
        let records = records.into_iter().enumerate().map(|(i, r)| (i + 1, Ok(r))).collect();
        let links = links.into_iter().enumerate().map(|(i, l)| (i + 1, Ok(l))).collect();
        assemble(passages, records, links, strictness).map_err(|(e, _)| e)
    }

    /// Links for one passage, in input order.
    pub fn links_for<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a EntityLink> + 'a {
        self.links.iter().filter(move |l| l.doc_id == doc_id)
    }
}

fn check_record(
    record: &QaRecord,
    line: usize,
    passages: &BTreeMap<String, Passage>,
    seen_ids: &HashSet<RecordId>,
) -> Result<(), IngestError> {
    let Some(passage) = passages.get(&record.doc_id) else {
        return Err(IngestError::UnknownDocId {
            line,
            doc_id: record.doc_id.clone(),
        });
    };
    if seen_ids.contains(&record.record_id) {
        return Err(IngestError::DuplicateRecordId {
            line,
            record_id: record.record_id.to_string(),
        });
    }
    let report = validate_record(record, passage);
    if !report.is_valid() {
        let details = report
            .violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(IngestError::InvalidRecord {
            line,
            record_id: record.record_id.to_string(),
            details,
        });
    }
    Ok(())
}

enum LinkProblem {
    OutOfBounds(String),
    Invalid(IngestError),
}

fn check_link(
    link: &EntityLink,
    line: usize,
    passages: &BTreeMap<String, Passage>,
) -> Result<(), LinkProblem> {
    let Some(passage) = passages.get(&link.doc_id) else {
        return Err(LinkProblem::Invalid(IngestError::UnknownDocId {
            line,
            doc_id: link.doc_id.clone(),
        }));
    };
    let invalid = |details: String| {
        LinkProblem::Invalid(IngestError::InvalidLink {
            line,
            entity_id: link.entity_id.to_string(),
            details,
        })
    };
    let host_len = char_len(&passage.text);
    if link.mention.end > host_len {
        return Err(LinkProblem::OutOfBounds(format!(
            "line {line}: link to {} dropped: mention end {} exceeds passage length {host_len}",
            link.entity_id, link.mention.end
        )));
    }
    if link.mention.start >= link.mention.end {
        return Err(invalid("empty mention span".into()));
    }
    if !link.mention.matches_host(&passage.text) {
        return Err(invalid(format!(
            "mention text {:?} does not match the passage",
            link.mention.text
        )));
    }
    if !(0.0..=1.0).contains(&link.link_confidence) {
        return Err(invalid(format!(
            "link_confidence {} outside [0, 1]",
            link.link_confidence
        )));
    }
    Ok(())
}

fn assemble(
    passages: Vec<Passage>,
    records: Vec<(usize, Result<QaRecord, IngestError>)>,
    links: Vec<(usize, Result<EntityLink, IngestError>)>,
    strictness: Strictness,
) -> Result<Corpus, (IngestError, Source)> {
    let passages: BTreeMap<String, Passage> = passages
        .into_iter()
        .map(|p| (p.doc_id.clone(), p))
        .collect();
    let mut corpus = Corpus {
        passages,
        ..Corpus::default()
    };

    let mut seen_ids = HashSet::new();
    for (line, parsed) in records {
        let checked = parsed.and_then(|record| {
            check_record(&record, line, &corpus.passages, &seen_ids).map(|()| record)
        });
        match checked {
            Ok(record) => {
                seen_ids.insert(record.record_id.clone());
                corpus.records.push(record);
                corpus.stats.records_accepted += 1;
            }
            Err(e) if strictness == Strictness::Strict => return Err((e, Source::Records)),
            Err(e) => {
                corpus.stats.records_rejected += 1;
                corpus.diagnostics.push(format!("records: {e}"));
            }
        }
    }

    for (line, parsed) in links {
        let checked = parsed
            .map_err(LinkProblem::Invalid)
            .and_then(|link| check_link(&link, line, &corpus.passages).map(|()| link));
        match checked {
            Ok(link) => {
                corpus.links.push(link);
                corpus.stats.links_accepted += 1;
            }
            Err(LinkProblem::OutOfBounds(message)) => {
                corpus.stats.links_rejected += 1;
                corpus.stats.links_out_of_bounds += 1;
                corpus.diagnostics.push(format!("links: {message}"));
            }
            Err(LinkProblem::Invalid(e)) if strictness == Strictness::Strict => {
                return Err((e, Source::Links))
            }
            Err(LinkProblem::Invalid(e)) => {
                corpus.stats.links_rejected += 1;
                corpus.diagnostics.push(format!("links: {e}"));
            }
        }
    }
    Ok(corpus)
}
