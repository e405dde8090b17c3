//! Tokenization, inverted index and BM25 top-k retrieval.
//!
//! Scoring uses the Lucene form of BM25:
//!
//! ```text
//! idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(d, q) = sum over query tokens t of
//!               idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! ```
//!
//! Query tokens are not deduplicated: a term repeated in the query contributes
//! once per occurrence, as with one boolean clause per analyzed token.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;

pub const SUPPORT_DEPTH: usize = 100;
pub const CONTRADICTION_DEPTH: usize = 1000;
pub const ATTRIBUTION_DEPTH: usize = 1000;

/// First line of every index snapshot file.
pub const SNAPSHOT_MAGIC: &str = "CONTRAGROUND-INDEX";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Lowercased alphanumeric terms, in text order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

/// Lowercases and splits on every non-alphanumeric character. No stemming and
/// no stopword removal.
pub fn tokenize(text: &str) -> TokenStream {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenStream { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

/// A scored document within one ranked list. Ranks are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Sorts `(doc_id, score)` pairs by descending score, ties by ascending
/// doc_id, keeps at most `k` and assigns contiguous ranks.
pub fn rank_scored(mut scored: Vec<(String, f64)>, k: usize) -> Vec<RankedCandidate> {
    scored.sort_by(|a, b| cmp_score_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| RankedCandidate {
            doc_id,
            score,
            rank: i + 1,
        })
        .collect()
}

pub(crate) fn cmp_score_desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: HashMap<String, Vec<Posting>>,
}

/// Text indexed for one document: title followed by all sentences.
pub fn indexed_text(doc: &Document) -> String {
    doc.full_text()
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        Self::build_from_documents(corpus.documents(), params)
    }

    pub fn build_from_documents(docs: &[Document], params: Bm25Params) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if !(params.k1 >= 0.0 && (0.0..=1.0).contains(&params.b)) {
            return Err(Error::Config(format!(
                "invalid BM25 parameters k1={} b={}",
                params.k1, params.b
            )));
        }
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());

        for (ordinal, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&indexed_text(doc));
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(doc.doc_id.clone());

            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in tokens.iter() {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf: count,
                });
            }
        }

        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;

        Ok(InvertedIndex {
            params,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn doc_id(&self, ordinal: usize) -> &str {
        &self.doc_ids[ordinal]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_count(), self.document_frequency(term))
    }

    /// Top-`k` documents for `query`. Only documents with a positive score are
    /// returned; an empty query yields an empty list.
    pub fn search(&self, query: &str, k: usize) -> Vec<RankedCandidate> {
        if k == 0 {
            return Vec::new();
        }
        let query = tokenize(query);
        let mut acc: HashMap<u32, f64> = HashMap::new();
        let Bm25Params { k1, b } = self.params;
        for term in query.iter() {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = bm25_idf(self.doc_count(), list.len());
            for p in list {
                let dl = self.doc_lengths[p.doc as usize] as f64;
                let tf = p.tf as f64;
                let norm = k1 * (1.0 - b + b * dl / self.avg_doc_length);
                *acc.entry(p.doc).or_insert(0.0) += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let scored = acc
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(d, s)| (self.doc_ids[d as usize].clone(), s))
            .collect();
        rank_scored(scored, k)
    }

    /// Writes a snapshot: a `CONTRAGROUND-INDEX <version>` header line followed
    /// by the index as a single JSON record.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}").map_err(|e| Error::io(path, e))?;
        let mut sorted: Vec<(&String, &Vec<Posting>)> = self.postings.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        let body = SnapshotBody {
            params: self.params,
            doc_ids: &self.doc_ids,
            doc_lengths: &self.doc_lengths,
            postings: sorted,
        };
        serde_json::to_writer(&mut w, &body)
            .map_err(|e| Error::Snapshot(e.to_string()))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader
            .read_line(&mut header)
            .map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(SNAPSHOT_MAGIC) {
            return Err(Error::Snapshot(format!(
                "{} is not an index snapshot",
                path.display()
            )));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Snapshot("missing snapshot version".into()))?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let body: OwnedSnapshotBody =
            serde_json::from_reader(reader).map_err(|e| Error::Snapshot(e.to_string()))?;
        if body.doc_ids.len() != body.doc_lengths.len() || body.doc_ids.is_empty() {
            return Err(Error::Snapshot("inconsistent document tables".into()));
        }
        let total: u64 = body.doc_lengths.iter().map(|&l| l as u64).sum();
        Ok(InvertedIndex {
            params: body.params,
            avg_doc_length: total as f64 / body.doc_lengths.len() as f64,
            doc_ids: body.doc_ids,
            doc_lengths: body.doc_lengths,
            postings: body.postings.into_iter().collect(),
        })
    }
}

#[derive(Serialize)]
struct SnapshotBody<'a> {
    params: Bm25Params,
    doc_ids: &'a [String],
    doc_lengths: &'a [u32],
    postings: Vec<(&'a String, &'a Vec<Posting>)>,
}

#[derive(Deserialize)]
struct OwnedSnapshotBody {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: Vec<(String, Vec<Posting>)>,
}

pub fn bm25_idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

pub fn build_index(corpus: &Corpus, params: Bm25Params) -> Result<InvertedIndex> {
    InvertedIndex::build(corpus, params)
}

pub fn bm25_search(index: &InvertedIndex, query: &str, k: usize) -> Vec<RankedCandidate> {
    index.search(query, k)
}
