//! Task B: narrative-aware context retrieval, one-shot prompt assembly,
//! generation clients and the per-sentence citation validator.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_records, segment_sentences, AttributionTopic, Corpus, Document};
use crate::error::{Error, Result};
use crate::lexindex::InvertedIndex;
use crate::scorers::remote::HttpJsonClient;
use crate::scorers::{rerank, Passage, Reranker, ScorerBackendConfig};

pub const STAGE1_DEPTH: usize = 1000;
pub const CONTEXT_SIZE: usize = 10;
/// Answers must stay strictly below this many words.
pub const WORD_LIMIT: usize = 250;
pub const MAX_CITATIONS: usize = 3;

pub const DEFAULT_CONSTRAINTS: &str = include_str!("../data/prompt_constraints.txt");
pub const DEFAULT_EXEMPLAR: &str = include_str!("../data/prompt_exemplar.txt");

static CITATION_GROUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]").unwrap());
// terminator run followed by one or more citation groups
static TRAILING_GROUPS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"([.!?]+)((?:\s*\[\s*\d+(?:\s*,\s*\d+)*\s*\])+)").unwrap()
});
static SPACE_BEFORE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+([.!?,;:])").unwrap());

#[derive(Debug, Clone, PartialEq)]
pub struct ContextDocument {
    pub document: Document,
    /// Stage-2 reranker score.
    pub score: f64,
    /// 1-based BM25 rank in stage 1.
    pub retrieval_rank: usize,
}

/// Stage 1: BM25 on the question alone, depth 1000. Stage 2: rerank against
/// the narrative (the question when the narrative is empty). The topic label
/// plays no part in retrieval.
pub fn retrieve_context(
    topic: &AttributionTopic,
    corpus: &Corpus,
    index: &InvertedIndex,
    reranker: &dyn Reranker,
) -> Result<Vec<ContextDocument>> {
    let pool = index.search(&topic.question, STAGE1_DEPTH);
    let stage1_rank: HashMap<&str, usize> = pool.iter().map(|c| (c.doc_id.as_str(), c.rank)).collect();
    let passages = pool
        .iter()
        .map(|c| {
            corpus
                .get(&c.doc_id)
                .map(|d| Passage::new(d.doc_id.clone(), d.full_text()))
                .ok_or_else(|| Error::Config(format!("index references unknown document `{}`", c.doc_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let query = if topic.narrative.trim().is_empty() {
        &topic.question
    } else {
        &topic.narrative
    };
    Ok(rerank(reranker, query, &passages)?
        .into_iter()
        .take(CONTEXT_SIZE)
        .map(|r| ContextDocument {
            retrieval_rank: stage1_rank[r.doc_id.as_str()],
            document: corpus.get(&r.doc_id).expect("checked above").clone(),
            score: r.score,
        })
        .collect())
}

/// Constraint and exemplar text for the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub constraints: String,
    pub exemplar: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            constraints: DEFAULT_CONSTRAINTS.trim_end().to_string(),
            exemplar: DEFAULT_EXEMPLAR.trim_end().to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn from_files(constraints: impl AsRef<Path>, exemplar: impl AsRef<Path>) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map(|s| s.trim_end().to_string())
                .map_err(|e| Error::Config(format!("cannot read template {}: {e}", p.display())))
        };
        Ok(PromptTemplates {
            constraints: read(constraints.as_ref())?,
            exemplar: read(exemplar.as_ref())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    /// 1-based local index used in citations.
    pub index: usize,
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub topic_id: String,
    pub constraints_block: String,
    pub exemplar_block: String,
    pub evidence: Vec<EvidenceEntry>,
    pub evidence_block: String,
    pub context_block: String,
    pub assembled_text: String,
}

impl PromptBundle {
    /// doc_ids by local index, position `i - 1` for citation `[i]`.
    pub fn evidence_ids(&self) -> Vec<String> {
        self.evidence.iter().map(|e| e.doc_id.clone()).collect()
    }
}

/// Concatenates constraints, exemplar, evidence and context, in that order,
/// separated by blank lines.
pub fn assemble_prompt(
    topic: &AttributionTopic,
    context: &[ContextDocument],
    templates: &PromptTemplates,
) -> PromptBundle {
    let evidence: Vec<EvidenceEntry> = context
        .iter()
        .take(CONTEXT_SIZE)
        .enumerate()
        .map(|(i, c)| EvidenceEntry {
            index: i + 1,
            doc_id: c.document.doc_id.clone(),
            score: c.score,
        })
        .collect();

    let mut evidence_block = String::from("Evidence:");
    for (entry, c) in evidence.iter().zip(context) {
        evidence_block.push_str(&format!(
            "\n[{}] (score={:.4}) {} \u{2014} {}",
            entry.index,
            entry.score,
            c.document.title.trim(),
            c.document.body_text()
        ));
    }

    let mut context_block = format!("Question: {}", topic.question.trim());
    if !topic.narrative.trim().is_empty() {
        context_block.push_str(&format!("\nNarrative: {}", topic.narrative.trim()));
    }
    if !topic.topic_label.trim().is_empty() {
        context_block.push_str(&format!("\nTopic: {}", topic.topic_label.trim()));
    }

    let assembled_text = [
        templates.constraints.as_str(),
        templates.exemplar.as_str(),
        evidence_block.as_str(),
        context_block.as_str(),
    ]
    .join("\n\n");

    PromptBundle {
        topic_id: topic.topic_id.clone(),
        constraints_block: templates.constraints.clone(),
        exemplar_block: templates.exemplar.clone(),
        evidence,
        evidence_block,
        context_block,
        assembled_text,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedSentence {
    /// Sentence text with citation groups removed.
    pub text: String,
    /// Resolved doc_ids, in citation order.
    pub citations: Vec<String>,
    /// Local indices as written, deduplicated, in citation order.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributedAnswer {
    pub topic_id: String,
    pub sentences: Vec<CitedSentence>,
    pub word_count: usize,
    pub source: String,
    /// Evidence doc_ids by local index.
    pub evidence: Vec<String>,
}

fn citation_indices(group: &str) -> impl Iterator<Item = usize> + '_ {
    // digits only, so parse failure means overflow: treat as out of range
    group
        .split(',')
        .map(|n| n.trim().parse::<usize>().unwrap_or(usize::MAX))
}

fn word_count(text: &str) -> usize {
    let stripped = CITATION_GROUP.replace_all(text, " ");
    SPACE_BEFORE_PUNCT
        .replace_all(&stripped, "$1")
        .split_whitespace()
        .count()
}

/// Splits generated text into sentences and attaches bracket citations to
/// the sentence that contains them. Citation groups placed after a
/// sentence's terminator are moved in front of it first.
pub fn parse_citations(topic_id: &str, text: &str, evidence: &[String]) -> AttributedAnswer {
    let normalized = TRAILING_GROUPS.replace_all(text, "$2$1");
    let sentences = segment_sentences(&normalized)
        .into_iter()
        .map(|raw| {
            let mut indices: Vec<usize> = Vec::new();
            for caps in CITATION_GROUP.captures_iter(&raw) {
                for i in citation_indices(&caps[1]) {
                    if !indices.contains(&i) {
                        indices.push(i);
                    }
                }
            }
            let stripped = CITATION_GROUP.replace_all(&raw, "");
            let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
            let text = SPACE_BEFORE_PUNCT.replace_all(&collapsed, "$1").into_owned();
            let citations = indices
                .iter()
                .filter_map(|&i| i.checked_sub(1).and_then(|j| evidence.get(j)).cloned())
                .collect();
            CitedSentence {
                text,
                citations,
                indices,
            }
        })
        .filter(|s| !s.text.is_empty() || !s.indices.is_empty())
        .collect();

    AttributedAnswer {
        topic_id: topic_id.to_string(),
        sentences,
        word_count: word_count(text),
        source: text.to_string(),
        evidence: evidence.to_vec(),
    }
}

/// Writes the answer back as text with a citation group before each
/// sentence's terminator.
pub fn render_answer(answer: &AttributedAnswer) -> String {
    answer
        .sentences
        .iter()
        .map(|s| {
            if s.indices.is_empty() {
                return s.text.clone();
            }
            let group = format!(
                "[{}]",
                s.indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            );
            let body = s.text.trim_end_matches(['.', '!', '?']);
            let terminator = &s.text[body.len()..];
            format!("{body} {group}{terminator}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    EmptyAnswer,
    UncitedSentence,
    TooManyCitations,
    UnknownIndex,
    WordLimit,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::EmptyAnswer => "empty-answer",
            ViolationKind::UncitedSentence => "uncited-sentence",
            ViolationKind::TooManyCitations => "too-many-citations",
            ViolationKind::UnknownIndex => "unknown-index",
            ViolationKind::WordLimit => "word-limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for answer-level violations.
    pub sentence: Option<usize>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationReport {
    pub sentence_count: usize,
    pub coverage: f64,
    pub avg_citations_per_sentence: f64,
    pub violations: Vec<Violation>,
}

impl CitationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Coverage and density over sentences, plus every broken rule. An empty
/// answer has coverage 1.0 by convention.
pub fn validate_answer(answer: &AttributedAnswer) -> CitationReport {
    let n = answer.sentences.len();
    let mut violations = Vec::new();
    if n == 0 {
        violations.push(Violation {
            sentence: None,
            kind: ViolationKind::EmptyAnswer,
        });
    }
    let mut cited = 0usize;
    let mut total = 0usize;
    for (i, s) in answer.sentences.iter().enumerate() {
        let mut flag = |kind| {
            violations.push(Violation {
                sentence: Some(i),
                kind,
            })
        };
        total += s.indices.len();
        if s.indices.is_empty() {
            flag(ViolationKind::UncitedSentence);
        } else {
            cited += 1;
        }
        if s.indices.len() > MAX_CITATIONS {
            flag(ViolationKind::TooManyCitations);
        }
        if s.indices.iter().any(|&k| k == 0 || k > answer.evidence.len()) {
            flag(ViolationKind::UnknownIndex);
        }
    }
    if answer.word_count >= WORD_LIMIT {
        violations.push(Violation {
            sentence: None,
            kind: ViolationKind::WordLimit,
        });
    }
    let (coverage, avg) = if n == 0 {
        (1.0, 0.0)
    } else {
        (cited as f64 / n as f64, total as f64 / n as f64)
    };
    CitationReport {
        sentence_count: n,
        coverage,
        avg_citations_per_sentence: avg,
        violations,
    }
}

/// Produces raw answer text for a prompt.
pub trait GenerationClient: Send + Sync {
    fn generate(&self, topic_id: &str, prompt: &str, max_words: usize) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub topic_id: String,
    pub text: String,
}

/// Returns stored responses keyed by topic_id.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    responses: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        ReplayClient {
            responses: records.into_iter().map(|r| (r.topic_id, r.text)).collect(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(read_records::<ReplayRecord>(path.as_ref())?))
    }
}

impl GenerationClient for ReplayClient {
    fn generate(&self, topic_id: &str, _prompt: &str, _max_words: usize) -> Result<String> {
        self.responses.get(topic_id).cloned().ok_or_else(|| Error::Replay {
            topic_id: topic_id.to_string(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub max_words: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

/// `POST /v1/generate` on the inference service.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: HttpJsonClient,
}

impl RemoteGenerator {
    pub fn new(config: &ScorerBackendConfig) -> Result<Self> {
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("remote generation requires an endpoint".into()))?;
        Ok(RemoteGenerator {
            client: HttpJsonClient::new(endpoint, config.timeout, config.retries),
        })
    }
}

impl GenerationClient for RemoteGenerator {
    fn generate(&self, _topic_id: &str, prompt: &str, max_words: usize) -> Result<String> {
        let resp: GenerateResponse = self.client.post(
            "/v1/generate",
            &GenerateRequest {
                prompt: prompt.to_string(),
                max_words,
            },
        )?;
        Ok(resp.text)
    }
}

pub fn generate(bundle: &PromptBundle, client: &dyn GenerationClient) -> Result<String> {
    client.generate(&bundle.topic_id, &bundle.assembled_text, WORD_LIMIT - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub topic_id: String,
    pub sentences: Vec<CitedSentence>,
    pub word_count: usize,
    pub report: CitationReport,
    pub evidence: Vec<String>,
    /// Stage 1 found nothing, so the prompt carried no evidence.
    #[serde(default)]
    pub empty_context: bool,
    #[serde(default)]
    pub source: String,
}

impl AnswerRecord {
    pub fn from_answer(answer: AttributedAnswer) -> Self {
        let report = validate_answer(&answer);
        AnswerRecord {
            topic_id: answer.topic_id,
            empty_context: answer.evidence.is_empty(),
            sentences: answer.sentences,
            word_count: answer.word_count,
            report,
            evidence: answer.evidence,
            source: answer.source,
        }
    }

    pub fn answer(&self) -> AttributedAnswer {
        AttributedAnswer {
            topic_id: self.topic_id.clone(),
            sentences: self.sentences.clone(),
            word_count: self.word_count,
            source: self.source.clone(),
            evidence: self.evidence.clone(),
        }
    }
}

pub fn load_answers(path: impl AsRef<Path>) -> Result<Vec<AnswerRecord>> {
    read_records(path.as_ref())
}

/// Retrieval, prompt, generation and validation for one topic.
pub fn attribute(
    topic: &AttributionTopic,
    corpus: &Corpus,
    index: &InvertedIndex,
    reranker: &dyn Reranker,
    templates: &PromptTemplates,
    client: &dyn GenerationClient,
) -> Result<AnswerRecord> {
    let context = retrieve_context(topic, corpus, index, reranker)?;
    let bundle = assemble_prompt(topic, &context, templates);
    let text = generate(&bundle, client)?;
    Ok(AnswerRecord::from_answer(parse_citations(
        &topic.topic_id,
        &text,
        &bundle.evidence_ids(),
    )))
}
