//! Domain types shared by every stage of the pipeline.
//!
//! A [`QaRecord`] is the atomic element of the database: a question, an
//! answer span in a source passage, and a list of aligned reference pairs
//! (a span in the question and a referentially equivalent span in the
//! passage). [`EntityLink`]s come from an entity linker run over passages.
//!
//! All offsets are *character* offsets (Unicode scalar values) into the
//! containing string, never byte offsets.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Opaque entity identifier assigned by the upstream entity linker.
    EntityId
);
string_id!(
    /// Unique identifier of a generated question.
    RecordId
);

/// Returns the substring covering characters `[start, end)` of `host`, or
/// `None` when the range is empty, reversed, or out of bounds.
pub fn char_slice(host: &str, start: usize, end: usize) -> Option<&str> {
    if start >= end {
        return None;
    }
    let mut indices = host.char_indices().map(|(i, _)| i).chain(Some(host.len()));
    let from = indices.nth(start)?;
    let to = indices.nth(end - start - 1)?;
    Some(&host[from..to])
}

/// Number of characters in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// A half-open character range `[start, end)` plus the text it covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Span {
    pub fn new(start: usize, end: usize, text: impl Into<String>) -> Self {
        Self {
            start,
            end,
            text: text.into(),
        }
    }

    /// Builds a span by slicing `host`; `None` if the range is invalid.
    pub fn from_host(host: &str, start: usize, end: usize) -> Option<Self> {
        char_slice(host, start, end).map(|text| Self::new(start, end, text))
    }

    /// Locates the first occurrence of `needle` in `host`.
    pub fn find(host: &str, needle: &str) -> Option<Self> {
        let byte = host.find(needle)?;
        let start = char_len(&host[..byte]);
        Some(Self::new(start, start + char_len(needle), needle))
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// True when `other` lies within `self` (equality included).
    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// True when the stored text equals `host[start..end)`.
    pub fn matches_host(&self, host: &str) -> bool {
        char_slice(host, self.start, self.end) == Some(self.text.as_str())
    }
}

/// An aligned pair of referentially equivalent spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    /// Span in the question.
    pub q_span: Span,
    /// Span in the source passage.
    pub d_span: Span,
    pub align_confidence: f64,
}

/// One generated question with its answer and explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub record_id: RecordId,
    /// Stored verbatim; generated questions are typically lowercase.
    pub question: String,
    pub doc_id: String,
    pub answer: Span,
    /// Ordered by question-span start.
    pub references: Vec<ReferencePair>,
    /// Producer-supplied entity sets, one per reference.
    pub question_entities: Vec<BTreeSet<EntityId>>,
}

impl QaRecord {
    /// Minimum alignment confidence over the references; 1.0 when there are none.
    pub fn min_align_confidence(&self) -> f64 {
        self.references
            .iter()
            .map(|r| r.align_confidence)
            .fold(1.0, f64::min)
    }
}

/// An entity mention found by the linker in a passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityLink {
    pub doc_id: String,
    pub mention: Span,
    pub entity_id: EntityId,
    pub canonical_name: String,
    pub link_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// Which span of a record a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanRole {
    Answer,
    QuestionRef(usize),
    PassageRef(usize),
}

impl fmt::Display for SpanRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpanRole::Answer => f.write_str("answer"),
            SpanRole::QuestionRef(i) => write!(f, "references[{i}].q_span"),
            SpanRole::PassageRef(i) => write!(f, "references[{i}].d_span"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DocMismatch { record_doc: String, passage_doc: String },
    EmptySpan { role: SpanRole },
    SpanOutOfBounds { role: SpanRole, end: usize, host_len: usize },
    SpanTextMismatch { role: SpanRole, stored: String, actual: String },
    ConfidenceOutOfRange { index: usize, value: f64 },
    ReferencesOutOfOrder { index: usize },
    ReferencesOverlap { index: usize },
    EntityArity { references: usize, entity_sets: usize },
    AnswerOverlapsReference { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DocMismatch {
                record_doc,
                passage_doc,
            } => write!(f, "record doc_id {record_doc:?} checked against passage {passage_doc:?}"),
            Violation::EmptySpan { role } => write!(f, "{role}: start must be less than end"),
            Violation::SpanOutOfBounds {
                role,
                end,
                host_len,
            } => write!(f, "{role}: end offset {end} exceeds text length {host_len}"),
            Violation::SpanTextMismatch {
                role,
                stored,
                actual,
            } => write!(f, "{role}: text {stored:?} does not match host substring {actual:?}"),
            Violation::ConfidenceOutOfRange { index, value } => {
                write!(f, "references[{index}]: align_confidence {value} outside [0, 1]")
            }
            Violation::ReferencesOutOfOrder { index } => {
                write!(f, "references[{index}]: not ordered by question offset")
            }
            Violation::ReferencesOverlap { index } => {
                write!(f, "references[{index}]: question span overlaps the previous reference")
            }
            Violation::EntityArity {
                references,
                entity_sets,
            } => write!(
                f,
                "{references} references but {entity_sets} question entity sets"
            ),
            Violation::AnswerOverlapsReference { index } => {
                write!(f, "answer overlaps references[{index}].d_span")
            }
        }
    }
}

/// Result of [`validate_record`]; empty means the record is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_span(span: &Span, host: &str, role: SpanRole, out: &mut Vec<Violation>) {
    if span.start >= span.end {
        out.push(Violation::EmptySpan { role });
        return;
    }
    let host_len = char_len(host);
    if span.end > host_len {
        out.push(Violation::SpanOutOfBounds {
            role,
            end: span.end,
            host_len,
        });
        return;
    }
    let actual = char_slice(host, span.start, span.end).unwrap_or_default();
    if actual != span.text {
        out.push(Violation::SpanTextMismatch {
            role,
            stored: span.text.clone(),
            actual: actual.to_owned(),
        });
    }
}

/// Checks every span and structural invariant of `record` against its
/// source passage. Violations are returned as data.
pub fn validate_record(record: &QaRecord, passage: &Passage) -> ValidationReport {
    let mut violations = Vec::new();
    if record.doc_id != passage.doc_id {
        violations.push(Violation::DocMismatch {
            record_doc: record.doc_id.clone(),
            passage_doc: passage.doc_id.clone(),
        });
    }
    check_span(&record.answer, &passage.text, SpanRole::Answer, &mut violations);

    let mut previous: Option<&Span> = None;
    for (i, pair) in record.references.iter().enumerate() {
        check_span(&pair.q_span, &record.question, SpanRole::QuestionRef(i), &mut violations);
        check_span(&pair.d_span, &passage.text, SpanRole::PassageRef(i), &mut violations);
        if !(0.0..=1.0).contains(&pair.align_confidence) {
            violations.push(Violation::ConfidenceOutOfRange {
                index: i,
                value: pair.align_confidence,
            });
        }
        if let Some(prev) = previous {
            if pair.q_span.start < prev.start {
                violations.push(Violation::ReferencesOutOfOrder { index: i });
            } else if pair.q_span.overlaps(prev) {
                violations.push(Violation::ReferencesOverlap { index: i });
            }
        }
        previous = Some(&pair.q_span);
        if record.answer.overlaps(&pair.d_span) {
            violations.push(Violation::AnswerOverlapsReference { index: i });
        }
    }

    if record.question_entities.len() != record.references.len() {
        violations.push(Violation::EntityArity {
            references: record.references.len(),
            entity_sets: record.question_entities.len(),
        });
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "Tipping the Velvet is a 2002 BBC drama serial based on a 1998 novel of the same name by Sarah Waters.";

    fn passage() -> Passage {
        Passage {
            doc_id: "d1".into(),
            text: DOC.into(),
            title: None,
        }
    }

    fn fingersmith_record() -> QaRecord {
        let question = "what is the tv series tipping the velvet based on";
        QaRecord {
            record_id: "q1".into(),
            question: question.into(),
            doc_id: "d1".into(),
            answer: Span::find(DOC, "a 1998 novel of the same name by Sarah Waters").unwrap(),
            references: vec![ReferencePair {
                q_span: Span::find(question, "the tv series tipping the velvet").unwrap(),
                d_span: Span::find(DOC, "Tipping the Velvet").unwrap(),
                align_confidence: 1.0,
            }],
            question_entities: vec![BTreeSet::new()],
        }
    }

    #[test]
    fn char_slice_uses_character_offsets() {
        let s = "Röntgen won";
        assert_eq!(char_slice(s, 0, 7), Some("Röntgen"));
        assert_eq!(char_slice(s, 8, 11), Some("won"));
        assert_eq!(char_slice(s, 8, 12), None);
        assert_eq!(char_slice(s, 3, 3), None);
        let span = Span::find(s, "won").unwrap();
        assert_eq!((span.start, span.end), (8, 11));
    }

    #[test]
    fn fingersmith_record_is_valid() {
        let report = validate_record(&fingersmith_record(), &passage());
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn answer_text_mismatch_is_one_violation() {
        let mut record = fingersmith_record();
        record.answer.text = "a 1999 novel of the same name by Sarah Waters".into();
        let report = validate_record(&record, &passage());
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::SpanTextMismatch {
                role: SpanRole::Answer,
                ..
            }
        ));
        assert!(report.violations[0].to_string().contains("answer"));
    }

    #[test]
    fn entity_arity_mismatch_is_one_violation() {
        let question = "who plays nan astley in tipping the velvet";
        let doc = "Tipping the Velvet stars Rachael Stirling as Nan Astley.";
        let record = QaRecord {
            record_id: "q3".into(),
            question: question.into(),
            doc_id: "d1".into(),
            answer: Span::find(doc, "Rachael Stirling").unwrap(),
            references: vec![
                ReferencePair {
                    q_span: Span::find(question, "nan astley").unwrap(),
                    d_span: Span::find(doc, "Nan Astley").unwrap(),
                    align_confidence: 0.9,
                },
                ReferencePair {
                    q_span: Span::find(question, "tipping the velvet").unwrap(),
                    d_span: Span::find(doc, "Tipping the Velvet").unwrap(),
                    align_confidence: 0.9,
                },
            ],
            question_entities: vec![BTreeSet::new()],
        };
        let passage = Passage {
            doc_id: "d1".into(),
            text: doc.into(),
            title: None,
        };
        let report = validate_record(&record, &passage);
        assert_eq!(
            report.violations,
            vec![Violation::EntityArity {
                references: 2,
                entity_sets: 1
            }]
        );
    }

    #[test]
    fn overlapping_answer_and_reference_is_reported() {
        let mut record = fingersmith_record();
        record.answer = Span::find(DOC, "Tipping the Velvet is").unwrap();
        let report = validate_record(&record, &passage());
        assert_eq!(
            report.violations,
            vec![Violation::AnswerOverlapsReference { index: 0 }]
        );
    }

    #[test]
    fn reference_order_and_overlap() {
        let mut record = fingersmith_record();
        let mut second = record.references[0].clone();
        second.q_span = Span::find(&record.question, "what is").unwrap();
        second.d_span = Span::find(DOC, "BBC").unwrap();
        record.references.push(second);
        record.question_entities.push(BTreeSet::new());
        let report = validate_record(&record, &passage());
        assert_eq!(
            report.violations,
            vec![Violation::ReferencesOutOfOrder { index: 1 }]
        );

        let mut record = fingersmith_record();
        let mut second = record.references[0].clone();
        second.q_span = Span::find(&record.question, "velvet based").unwrap();
        second.d_span = Span::find(DOC, "BBC").unwrap();
        record.references.push(second);
        record.question_entities.push(BTreeSet::new());
        let report = validate_record(&record, &passage());
        assert_eq!(
            report.violations,
            vec![Violation::ReferencesOverlap { index: 1 }]
        );
    }

    #[test]
    fn out_of_bounds_and_bad_confidence() {
        let mut record = fingersmith_record();
        record.answer.end = 10_000;
        record.references[0].align_confidence = 1.5;
        let report = validate_record(&record, &passage());
        assert_eq!(report.violations.len(), 2);
        assert!(matches!(report.violations[0], Violation::SpanOutOfBounds { .. }));
        assert!(matches!(
            report.violations[1],
            Violation::ConfidenceOutOfRange { index: 0, .. }
        ));
    }

    #[test]
    fn min_align_confidence_defaults_to_one() {
        let mut record = fingersmith_record();
        record.references.clear();
        assert_eq!(record.min_align_confidence(), 1.0);
        let mut record = fingersmith_record();
        record.references[0].align_confidence = 0.7;
        assert_eq!(record.min_align_confidence(), 0.7);
    }
}
