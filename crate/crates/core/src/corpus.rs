//! Document model, line-delimited record loaders and sentence segmentation.
//!
//! Every record file is UTF-8 with one JSON object per line. Blank lines are
//! skipped; any other line that fails to parse is reported with its 1-based
//! line number.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// One abstract: identifier, title and its ordered sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(deserialize_with = "opaque_id")]
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract")]
    pub sentences: Vec<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, sentences: Vec<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            title: title.into(),
            sentences,
        }
    }

    /// Title followed by every sentence, joined with single spaces.
    pub fn full_text(&self) -> String {
        let mut out = String::with_capacity(
            self.title.len() + self.sentences.iter().map(|s| s.len() + 1).sum::<usize>(),
        );
        if !self.title.trim().is_empty() {
            out.push_str(self.title.trim());
        }
        for s in &self.sentences {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(s.trim());
        }
        out
    }

    /// The abstract without the title.
    pub fn body_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.trim())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn validate(&self) -> Result<()> {
        if self.doc_id.is_empty() {
            return Err(Error::InvalidDocument {
                doc_id: String::new(),
                reason: "empty doc_id".into(),
            });
        }
        if self.sentences.is_empty() {
            return Err(Error::InvalidDocument {
                doc_id: self.doc_id.clone(),
                reason: "abstract has no sentences".into(),
            });
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(Error::InvalidDocument {
                doc_id: self.doc_id.clone(),
                reason: format!("sentence {i} is empty"),
            });
        }
        Ok(())
    }
}

/// An immutable collection of documents with lookup by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            d.validate()?;
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId(d.doc_id.clone()));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }
}

/// Task A input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingTopic {
    #[serde(deserialize_with = "opaque_id")]
    pub topic_id: String,
    pub question: String,
    pub answer_sentence: String,
    #[serde(default, deserialize_with = "opaque_id_set")]
    pub old_ids: BTreeSet<String>,
}

/// Task B input. `topic_label` and `narrative` may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionTopic {
    #[serde(deserialize_with = "opaque_id")]
    pub topic_id: String,
    pub question: String,
    #[serde(default)]
    pub topic_label: String,
    #[serde(default)]
    pub narrative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Support,
    Contradict,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Support => "SUPPORT",
            Label::Contradict => "CONTRADICT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLabel {
    #[serde(deserialize_with = "opaque_id")]
    pub doc_id: String,
    pub label: Label,
}

/// One line of a gold labels file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    #[serde(deserialize_with = "opaque_id")]
    pub topic_id: String,
    #[serde(deserialize_with = "opaque_id")]
    pub doc_id: String,
    pub label: Label,
}

impl GoldLabel {
    pub fn evidence(&self) -> EvidenceLabel {
        EvidenceLabel {
            doc_id: self.doc_id.clone(),
            label: self.label,
        }
    }
}

// Identifiers are opaque strings; numeric ids (SciFact ships integers) are
// kept in their decimal text form.
fn opaque_id<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Int(i64),
        UInt(u64),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::Str(s) => s,
        Raw::Int(i) => i.to_string(),
        Raw::UInt(u) => u.to_string(),
    })
}

fn opaque_id_set<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<BTreeSet<String>, D::Error> {
    #[derive(Deserialize)]
    struct Wrapped(#[serde(deserialize_with = "opaque_id")] String);
    let raw: Vec<Wrapped> = Vec::deserialize(d)?;
    Ok(raw.into_iter().map(|w| w.0).collect())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses a line-delimited record file, mapping serde failures onto
/// `MissingField` / `Parse` errors that carry the line number.
pub(crate) fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record = serde_json::from_str::<T>(trimmed).map_err(|e| {
            let message = e.to_string();
            match missing_field_name(&message) {
                Some(field) => Error::MissingField {
                    path: path.to_path_buf(),
                    line: line_no,
                    field,
                },
                None => Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message,
                },
            }
        })?;
        out.push(record);
    }
    Ok(out)
}

fn missing_field_name(message: &str) -> Option<String> {
    let rest = message.strip_prefix("missing field `")?;
    let end = rest.find('`')?;
    Some(rest[..end].to_string())
}

pub(crate) fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serialization is infallible");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a corpus file. Abstracts arrive pre-segmented and are used verbatim.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let docs: Vec<Document> = read_records(path)?;
    Corpus::from_documents(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_records(path.as_ref(), corpus.documents())
}

pub fn load_grounding_topics(path: impl AsRef<Path>) -> Result<Vec<GroundingTopic>> {
    let path = path.as_ref();
    let topics: Vec<GroundingTopic> = read_records(path)?;
    for (i, t) in topics.iter().enumerate() {
        for (field, value) in [("question", &t.question), ("answer_sentence", &t.answer_sentence)] {
            if value.trim().is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("field `{field}` is empty"),
                });
            }
        }
    }
    Ok(topics)
}

pub fn load_attribution_topics(path: impl AsRef<Path>) -> Result<Vec<AttributionTopic>> {
    let path = path.as_ref();
    let topics: Vec<AttributionTopic> = read_records(path)?;
    if let Some(i) = topics.iter().position(|t| t.question.trim().is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "field `question` is empty".into(),
        });
    }
    Ok(topics)
}

pub fn load_gold_labels(path: impl AsRef<Path>) -> Result<Vec<GoldLabel>> {
    read_records(path.as_ref())
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];

/// Splits raw text into sentences.
///
/// A boundary is a run of `.`, `!` or `?` followed by whitespace and an
/// uppercase letter, or by the end of the text. A lone period after a
/// single-letter word (an initial) is never a boundary, and a period between
/// digits is never followed by whitespace so decimals stay intact.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let c = chars[i].1;
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        let mut run_end = i;
        while run_end + 1 < chars.len() && TERMINATORS.contains(&chars[run_end + 1].1) {
            run_end += 1;
        }
        let single_period = run_end == i && c == '.';
        let is_initial = single_period
            && i >= 1
            && chars[i - 1].1.is_alphabetic()
            && (i == 1 || !chars[i - 2].1.is_alphanumeric());

        let mut next = run_end + 1;
        let boundary = if is_initial {
            false
        } else if next >= chars.len() {
            true
        } else if chars[next].1.is_whitespace() {
            while next < chars.len() && chars[next].1.is_whitespace() {
                next += 1;
            }
            next >= chars.len() || chars[next].1.is_uppercase()
        } else {
            false
        };

        if boundary {
            let end_byte = chars[run_end].0 + chars[run_end].1.len_utf8();
            let sentence = text[start..end_byte].trim();
            if !sentence.is_empty() {
                sentences.push(sentence.to_string());
            }
            start = end_byte;
        }
        i = run_end + 1;
    }

    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}
