//! Learned-scorer abstractions: relevance reranking, three-way NLI and text
//! embedding. Backends are either the deterministic mocks in [`mock`] or the
//! HTTP client in [`remote`].

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexindex::{cmp_score_desc, rank_scored, RankedCandidate};

pub mod mock;
pub mod remote;

pub use mock::{MockEmbedder, MockNli, MockReranker, MOCK_EMBEDDING_DIM};
pub use remote::RemoteBackend;

pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Passage {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

/// A three-way distribution over entailment / contradiction / neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub p_entail: f64,
    pub p_contradict: f64,
    pub p_neutral: f64,
    pub label: NliLabel,
}

impl NliVerdict {
    /// Validates the distribution and derives the label: the strict argmax,
    /// or neutral when the maximum is shared.
    pub fn new(p_entail: f64, p_contradict: f64, p_neutral: f64) -> Result<Self> {
        let probs = [p_entail, p_contradict, p_neutral];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!(
                "NLI probabilities out of range: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::Config(format!(
                "NLI probabilities sum to {sum}, not 1"
            )));
        }
        let label = if p_entail > p_contradict && p_entail > p_neutral {
            NliLabel::Entailment
        } else if p_contradict > p_entail && p_contradict > p_neutral {
            NliLabel::Contradiction
        } else {
            NliLabel::Neutral
        };
        Ok(NliVerdict {
            p_entail,
            p_contradict,
            p_neutral,
            label,
        })
    }

    pub fn is_contradiction(&self) -> bool {
        self.label == NliLabel::Contradiction
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
}

impl NliPair {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        NliPair {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: other.dimension(),
            });
        }
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(dot / (na * nb))
    }
}

/// Cross-encoder style relevance scorer. Scores align with `passages` and lie
/// in `[0, 1]`.
pub trait Reranker: Send + Sync {
    fn score(&self, query: &str, passages: &[Passage]) -> Result<Vec<f64>>;
}

pub trait NliClassifier: Send + Sync {
    fn classify(&self, pairs: &[NliPair]) -> Result<Vec<NliVerdict>>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Scores every candidate against `query` and returns them best first, ties
/// by ascending doc_id.
pub fn rerank(
    reranker: &dyn Reranker,
    query: &str,
    candidates: &[Passage],
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let scores = reranker.score(query, candidates)?;
    if scores.len() != candidates.len() {
        return Err(Error::Config(format!(
            "reranker returned {} scores for {} passages",
            scores.len(),
            candidates.len()
        )));
    }
    let scored = candidates
        .iter()
        .zip(scores)
        .map(|(p, s)| (p.id.clone(), s))
        .collect();
    Ok(rank_scored(scored, candidates.len()))
}

pub fn nli(classifier: &dyn NliClassifier, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
    if premise.trim().is_empty() || hypothesis.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mut verdicts = classifier.classify(&[NliPair::new(premise, hypothesis)])?;
    verdicts
        .pop()
        .ok_or_else(|| Error::Config("NLI backend returned no verdict".into()))
}

/// Mean contradiction and entailment probability over `a → b` and `b → a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoWayMean {
    pub p_contradict: f64,
    pub p_entail: f64,
}

impl TwoWayMean {
    pub fn from_directions(forward: &NliVerdict, backward: &NliVerdict) -> Self {
        TwoWayMean {
            p_contradict: (forward.p_contradict + backward.p_contradict) / 2.0,
            p_entail: (forward.p_entail + backward.p_entail) / 2.0,
        }
    }
}

pub fn nli_two_way_mean(classifier: &dyn NliClassifier, a: &str, b: &str) -> Result<TwoWayMean> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let v = classifier.classify(&[NliPair::new(a, b), NliPair::new(b, a)])?;
    if v.len() != 2 {
        return Err(Error::Config(format!(
            "NLI backend returned {} verdicts for 2 pairs",
            v.len()
        )));
    }
    Ok(TwoWayMean::from_directions(&v[0], &v[1]))
}

/// Corpus embedded once, searched by exact cosine similarity.
#[derive(Debug, Clone)]
pub struct EmbeddedCorpus {
    doc_ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    dimension: usize,
}

impl EmbeddedCorpus {
    pub fn build(embedder: &dyn Embedder, docs: &[Passage]) -> Result<Self> {
        let texts: Vec<String> = docs.iter().map(|d| d.text.clone()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != docs.len() {
            return Err(Error::Config(format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                docs.len()
            )));
        }
        let dimension = vectors.first().map_or(0, EmbeddingVector::dimension);
        if let Some(bad) = vectors.iter().find(|v| v.dimension() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: bad.dimension(),
            });
        }
        Ok(EmbeddedCorpus {
            doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
            vectors,
            dimension,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn search_vector(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RankedCandidate>> {
        if query.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: query.dimension(),
            });
        }
        let mut scored = Vec::with_capacity(self.len());
        for (id, v) in self.doc_ids.iter().zip(&self.vectors) {
            scored.push((id.clone(), query.cosine(v)?));
        }
        Ok(rank_scored(scored, k))
    }
}

/// Exact top-`k` by cosine similarity. Empty query text is rejected.
pub fn dense_search(
    corpus: &EmbeddedCorpus,
    embedder: &dyn Embedder,
    query: &str,
    k: usize,
) -> Result<Vec<RankedCandidate>> {
    if query.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let q = embedder
        .embed(&[query.to_string()])?
        .pop()
        .ok_or_else(|| Error::Config("embedder returned no vector".into()))?;
    corpus.search_vector(&q, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_RETRIES: u32 = 2;

pub const ENV_ENDPOINT: &str = "CONTRAGROUND_ENDPOINT";
pub const ENV_TIMEOUT_MS: &str = "CONTRAGROUND_TIMEOUT_MS";

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerBackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub batch_size: usize,
    /// Total attempts before a 5xx or transport failure becomes an error.
    pub retries: u32,
}

impl Default for ScorerBackendConfig {
    fn default() -> Self {
        ScorerBackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout: DEFAULT_TIMEOUT,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            batch_size: DEFAULT_BATCH_SIZE,
            retries: DEFAULT_RETRIES,
        }
    }
}

impl ScorerBackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        ScorerBackendConfig {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    /// Applies `CONTRAGROUND_ENDPOINT` / `CONTRAGROUND_TIMEOUT_MS` if set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(endpoint) = std::env::var(ENV_ENDPOINT) {
            self.endpoint = Some(endpoint);
        }
        if let Ok(ms) = std::env::var(ENV_TIMEOUT_MS) {
            let ms: u64 = ms
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_TIMEOUT_MS}={ms} is not an integer")))?;
            self.timeout = Duration::from_millis(ms);
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Remote
            && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty())
        {
            return Err(Error::Config("remote backend requires an endpoint".into()));
        }
        if self.max_in_flight == 0 || self.batch_size == 0 || self.retries == 0 {
            return Err(Error::Config(
                "max_in_flight, batch_size and retries must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Scorers> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Mock => Scorers::mock(),
            BackendKind::Remote => {
                let backend = Arc::new(RemoteBackend::new(self.clone())?);
                Scorers {
                    reranker: backend.clone(),
                    nli: backend.clone(),
                    embedder: backend,
                }
            }
        })
    }
}

/// The three scorer roles bound to one backend.
#[derive(Clone)]
pub struct Scorers {
    pub reranker: Arc<dyn Reranker>,
    pub nli: Arc<dyn NliClassifier>,
    pub embedder: Arc<dyn Embedder>,
}

impl Scorers {
    pub fn mock() -> Self {
        Scorers {
            reranker: Arc::new(MockReranker),
            nli: Arc::new(MockNli::new()),
            embedder: Arc::new(MockEmbedder::default()),
        }
    }
}

impl std::fmt::Debug for Scorers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scorers").finish_non_exhaustive()
    }
}

/// Orders verdict-bearing items by descending score with doc_id tie-break.
pub(crate) fn sort_desc_by_score<T>(items: &mut [T], key: impl Fn(&T) -> (f64, &str)) {
    items.sort_by(|a, b| {
        let (sa, ia) = key(a);
        let (sb, ib) = key(b);
        cmp_score_desc(sa, sb).then_with(|| ia.cmp(ib))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_label_tie_goes_neutral() {
        let v = NliVerdict::new(0.45, 0.45, 0.10).unwrap();
        assert_eq!(v.label, NliLabel::Neutral);
        let v = NliVerdict::new(0.05, 0.90, 0.05).unwrap();
        assert_eq!(v.label, NliLabel::Contradiction);
        assert!(NliVerdict::new(0.5, 0.6, 0.0).is_err());
        assert!(NliVerdict::new(-0.1, 1.1, 0.0).is_err());
    }

    #[test]
    fn two_way_mean_is_unrounded() {
        let fwd = NliVerdict::new(0.01, 0.99, 0.00).unwrap();
        let bwd = NliVerdict::new(1.00, 0.00, 0.00).unwrap();
        let m = TwoWayMean::from_directions(&fwd, &bwd);
        assert!((m.p_contradict - 0.495).abs() < 1e-12);
        assert!((m.p_entail - 0.505).abs() < 1e-12);
    }

    #[test]
    fn remote_requires_endpoint() {
        let mut cfg = ScorerBackendConfig::remote("");
        assert!(cfg.validate().is_err());
        cfg.endpoint = None;
        assert!(cfg.validate().is_err());
        assert!(ScorerBackendConfig::remote("http://127.0.0.1:1").validate().is_ok());
        let zero = ScorerBackendConfig {
            batch_size: 0,
            ..ScorerBackendConfig::mock()
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = EmbeddingVector { values: vec![1.0, 0.0] };
        let b = EmbeddingVector { values: vec![1.0] };
        assert!(matches!(a.cosine(&b), Err(Error::DimensionMismatch { .. })));
    }
}
