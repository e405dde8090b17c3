//! Python bindings: corpus and index handling, negation cues, the mock
//! scorers, grounding, citation parsing and evaluation.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use cg::attribution as attr;
use cg::corpus::{self, Corpus, Document, GroundingTopic};
use cg::evalkit::{self, MrrMode};
use cg::fusion::{self, AdversarialConfig, RrfConfig};
use cg::grounding::{self, Granularity, GroundingConfig, GroundingContext, Variant};
use cg::lexindex::{self, Bm25Params, InvertedIndex, RankedCandidate};
use cg::negation::{self, NegationPatternSet};
use cg::scorers::mock::{MockEmbedder, MockNli, MockReranker};
use cg::scorers::{EmbeddedCorpus, Passage, Reranker, ScorerBackendConfig, Scorers};

fn py_err(e: cg::Error) -> PyErr {
    match e {
        cg::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = cg::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

#[pyclass(name = "Document", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyDocument {
    inner: Document,
}

#[pymethods]
impl PyDocument {
    #[new]
    #[pyo3(signature = (doc_id, title, sentences))]
    fn new(doc_id: String, title: String, sentences: Vec<String>) -> Self {
        PyDocument {
            inner: Document::new(doc_id, title, sentences),
        }
    }

    #[getter]
    fn doc_id(&self) -> &str {
        &self.inner.doc_id
    }

    #[getter]
    fn title(&self) -> &str {
        &self.inner.title
    }

    #[getter]
    fn sentences(&self) -> Vec<String> {
        self.inner.sentences.clone()
    }

    fn full_text(&self) -> String {
        self.inner.full_text()
    }

    fn __repr__(&self) -> String {
        format!("Document({:?}, {} sentences)", self.inner.doc_id, self.inner.sentences.len())
    }
}

#[pyclass(name = "Corpus", frozen)]
pub struct PyCorpus {
    inner: Corpus,
}

#[pymethods]
impl PyCorpus {
    #[new]
    fn new(documents: Vec<PyDocument>) -> PyResult<Self> {
        let docs = documents.into_iter().map(|d| d.inner).collect();
        Ok(PyCorpus {
            inner: Corpus::from_documents(docs).map_err(py_err)?,
        })
    }

    /// Reads a corpus JSONL file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: corpus::load_corpus(path).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn get(&self, doc_id: &str) -> Option<PyDocument> {
        self.inner.get(doc_id).map(|d| PyDocument { inner: d.clone() })
    }

    fn doc_ids(&self) -> Vec<String> {
        self.inner.iter().map(|d| d.doc_id.clone()).collect()
    }
}

fn hits(list: Vec<RankedCandidate>) -> Vec<(String, f64)> {
    list.into_iter().map(|c| (c.doc_id, c.score)).collect()
}

#[pyclass(name = "Index", frozen)]
pub struct PyIndex {
    inner: InvertedIndex,
}

#[pymethods]
impl PyIndex {
    #[new]
    #[pyo3(signature = (corpus, k1 = lexindex::DEFAULT_K1, b = lexindex::DEFAULT_B))]
    fn new(corpus: &PyCorpus, k1: f64, b: f64) -> PyResult<Self> {
        Ok(PyIndex {
            inner: InvertedIndex::build(&corpus.inner, Bm25Params { k1, b }).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyIndex {
            inner: InvertedIndex::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    /// Top-`k` `(doc_id, score)` pairs.
    #[pyo3(signature = (query, k = 10))]
    fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        hits(self.inner.search(query, k))
    }

    fn idf(&self, term: &str) -> f64 {
        self.inner.idf(term)
    }

    #[getter]
    fn doc_count(&self) -> usize {
        self.inner.doc_count()
    }

    #[getter]
    fn vocabulary_size(&self) -> usize {
        self.inner.vocabulary_size()
    }
}

#[pyclass(name = "GroundingTopic", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyGroundingTopic {
    inner: GroundingTopic,
}

#[pymethods]
impl PyGroundingTopic {
    #[new]
    #[pyo3(signature = (topic_id, question, answer_sentence, old_ids = Vec::new()))]
    fn new(topic_id: String, question: String, answer_sentence: String, old_ids: Vec<String>) -> Self {
        PyGroundingTopic {
            inner: GroundingTopic {
                topic_id,
                question,
                answer_sentence,
                old_ids: old_ids.into_iter().collect(),
            },
        }
    }

    #[getter]
    fn topic_id(&self) -> &str {
        &self.inner.topic_id
    }

    #[getter]
    fn answer_sentence(&self) -> &str {
        &self.inner.answer_sentence
    }

    #[getter]
    fn old_ids(&self) -> Vec<String> {
        self.inner.old_ids.iter().cloned().collect()
    }
}

#[pyfunction]
fn load_grounding_topics(path: &str) -> PyResult<Vec<PyGroundingTopic>> {
    Ok(corpus::load_grounding_topics(path)
        .map_err(py_err)?
        .into_iter()
        .map(|inner| PyGroundingTopic { inner })
        .collect())
}

#[pyclass(name = "GroundingResult", frozen)]
pub struct PyGroundingResult {
    inner: grounding::GroundingResult,
}

#[pymethods]
impl PyGroundingResult {
    #[getter]
    fn topic_id(&self) -> &str {
        &self.inner.topic_id
    }

    #[getter]
    fn variant(&self) -> &str {
        self.inner.variant.tag()
    }

    #[getter]
    fn supporting(&self) -> Vec<String> {
        self.inner.supporting.iter().map(|e| e.doc_id.clone()).collect()
    }

    #[getter]
    fn contradicting(&self) -> Vec<String> {
        self.inner.contradicting.iter().map(|e| e.doc_id.clone()).collect()
    }

    /// Run-file lines for the selected documents.
    fn run_lines(&self) -> Vec<String> {
        grounding::run_entries(&self.inner).iter().map(|e| e.to_string()).collect()
    }

    /// Run-file lines for the full branch rankings.
    fn ranking_lines(&self) -> Vec<String> {
        grounding::ranking_entries(&self.inner).iter().map(|e| e.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "GroundingResult({:?}, supporting={:?}, contradicting={:?})",
            self.inner.topic_id,
            self.inner.supporting_ids(),
            self.inner.contradicting_ids()
        )
    }
}

/// Owns everything a grounding run reads. The dense index is built on the
/// first call that needs it.
#[pyclass(name = "Grounder", frozen)]
pub struct PyGrounder {
    corpus: Corpus,
    index: InvertedIndex,
    patterns: NegationPatternSet,
    scorers: Scorers,
    dense: OnceLock<EmbeddedCorpus>,
}

impl PyGrounder {
    fn config(
        &self,
        variant: &str,
        granularity: &str,
        support_depth: Option<usize>,
        contra_depth: Option<usize>,
    ) -> PyResult<GroundingConfig> {
        let mut config = GroundingConfig::new(parse::<Variant>(variant)?);
        config.variant.granularity = parse::<Granularity>(granularity)?;
        if let Some(d) = support_depth {
            config.variant.support_depth = d;
        }
        if let Some(d) = contra_depth {
            config.variant.contra_depth = d;
        }
        config.validate().map_err(py_err)?;
        Ok(config)
    }

    fn run<R>(
        &self,
        config: &GroundingConfig,
        f: impl FnOnce(&GroundingContext<'_>) -> cg::Result<R>,
    ) -> cg::Result<R> {
        let dense = if config.variant.variant.needs_embedder() {
            if self.dense.get().is_none() {
                let built = grounding::embed_corpus(&self.corpus, self.scorers.embedder.as_ref())?;
                let _ = self.dense.set(built);
            }
            self.dense.get()
        } else {
            None
        };
        let ctx = GroundingContext {
            corpus: &self.corpus,
            index: &self.index,
            patterns: &self.patterns,
            scorers: &self.scorers,
            dense,
        };
        f(&ctx)
    }
}

#[pymethods]
impl PyGrounder {
    /// Mock scorers unless `endpoint` names an inference service.
    #[new]
    #[pyo3(signature = (corpus, endpoint = None, timeout_ms = None, k1 = lexindex::DEFAULT_K1, b = lexindex::DEFAULT_B))]
    fn new(corpus: &PyCorpus, endpoint: Option<String>, timeout_ms: Option<u64>, k1: f64, b: f64) -> PyResult<Self> {
        let mut backend = match endpoint {
            Some(url) => ScorerBackendConfig::remote(url),
            None => ScorerBackendConfig::mock(),
        };
        if let Some(ms) = timeout_ms {
            backend.timeout = std::time::Duration::from_millis(ms);
        }
        let corpus = corpus.inner.clone();
        Ok(PyGrounder {
            index: InvertedIndex::build(&corpus, Bm25Params { k1, b }).map_err(py_err)?,
            corpus,
            patterns: NegationPatternSet::builtin(),
            scorers: backend.build().map_err(py_err)?,
            dense: OnceLock::new(),
        })
    }

    #[pyo3(signature = (topic, variant = "v5", granularity = "sentence", support_depth = None, contra_depth = None))]
    fn ground(
        &self,
        py: Python<'_>,
        topic: &PyGroundingTopic,
        variant: &str,
        granularity: &str,
        support_depth: Option<usize>,
        contra_depth: Option<usize>,
    ) -> PyResult<PyGroundingResult> {
        let config = self.config(variant, granularity, support_depth, contra_depth)?;
        let inner = py
            .detach(|| self.run(&config, |ctx| grounding::ground(&topic.inner, ctx, &config)))
            .map_err(py_err)?;
        Ok(PyGroundingResult { inner })
    }

    #[pyo3(signature = (topics, variant = "v5", granularity = "sentence", jobs = 1))]
    fn ground_all(
        &self,
        py: Python<'_>,
        topics: Vec<PyGroundingTopic>,
        variant: &str,
        granularity: &str,
        jobs: usize,
    ) -> PyResult<Vec<PyGroundingResult>> {
        let config = self.config(variant, granularity, None, None)?;
        let topics: Vec<GroundingTopic> = topics.into_iter().map(|t| t.inner).collect();
        let results = py
            .detach(|| self.run(&config, |ctx| grounding::ground_all(&topics, ctx, &config, jobs)))
            .map_err(py_err)?;
        Ok(results.into_iter().map(|inner| PyGroundingResult { inner }).collect())
    }
}

#[pyclass(name = "CitationReport", frozen)]
pub struct PyCitationReport {
    inner: attr::CitationReport,
}

#[pymethods]
impl PyCitationReport {
    #[getter]
    fn sentence_count(&self) -> usize {
        self.inner.sentence_count
    }

    #[getter]
    fn coverage(&self) -> f64 {
        self.inner.coverage
    }

    #[getter]
    fn avg_citations_per_sentence(&self) -> f64 {
        self.inner.avg_citations_per_sentence
    }

    /// `(sentence index or None, kind)` pairs.
    #[getter]
    fn violations(&self) -> Vec<(Option<usize>, String)> {
        self.inner
            .violations
            .iter()
            .map(|v| (v.sentence, v.kind.to_string()))
            .collect()
    }

    fn is_clean(&self) -> bool {
        self.inner.is_clean()
    }
}

#[pyclass(name = "AttributedAnswer", frozen)]
pub struct PyAttributedAnswer {
    inner: attr::AttributedAnswer,
}

#[pymethods]
impl PyAttributedAnswer {
    #[getter]
    fn topic_id(&self) -> &str {
        &self.inner.topic_id
    }

    /// `(text, cited doc_ids, local indices)` per sentence.
    #[getter]
    fn sentences(&self) -> Vec<(String, Vec<String>, Vec<usize>)> {
        self.inner
            .sentences
            .iter()
            .map(|s| (s.text.clone(), s.citations.clone(), s.indices.clone()))
            .collect()
    }

    #[getter]
    fn word_count(&self) -> usize {
        self.inner.word_count
    }

    #[getter]
    fn evidence(&self) -> Vec<String> {
        self.inner.evidence.clone()
    }

    fn render(&self) -> String {
        attr::render_answer(&self.inner)
    }

    fn validate(&self) -> PyCitationReport {
        PyCitationReport {
            inner: attr::validate_answer(&self.inner),
        }
    }
}

#[pyfunction]
fn parse_citations(topic_id: &str, text: &str, evidence: Vec<String>) -> PyAttributedAnswer {
    PyAttributedAnswer {
        inner: attr::parse_citations(topic_id, text, &evidence),
    }
}

#[pyclass(name = "MrrReport", frozen)]
pub struct PyMrrReport {
    inner: evalkit::RunEvaluation,
}

#[pymethods]
impl PyMrrReport {
    #[getter]
    fn mrr_support(&self) -> f64 {
        self.inner.mrr.mrr_support
    }

    #[getter]
    fn mrr_contra(&self) -> f64 {
        self.inner.mrr.mrr_contra
    }

    #[getter]
    fn n_support(&self) -> usize {
        self.inner.mrr.n_support
    }

    #[getter]
    fn n_contra(&self) -> usize {
        self.inner.mrr.n_contra
    }

    #[getter]
    fn weighted_mrr(&self) -> f64 {
        self.inner.mrr.weighted_mrr
    }

    /// `(topic_id, label, reciprocal rank)` rows.
    #[getter]
    fn per_topic(&self) -> Vec<(String, String, f64)> {
        self.inner
            .mrr
            .per_topic
            .iter()
            .map(|t| (t.topic_id.clone(), t.label.to_string(), t.reciprocal_rank))
            .collect()
    }

    /// `(precision, recall, f1)` of the top three per role.
    #[getter]
    fn support_prf(&self) -> (f64, f64, f64) {
        let p = self.inner.selection.support;
        (p.precision, p.recall, p.f1)
    }

    #[getter]
    fn contradiction_prf(&self) -> (f64, f64, f64) {
        let p = self.inner.selection.contradiction;
        (p.precision, p.recall, p.f1)
    }
}

/// Scores a run file against gold labels.
#[pyfunction]
#[pyo3(signature = (run_path, gold_path, mode = "rank-list"))]
fn evaluate_run(run_path: &str, gold_path: &str, mode: &str) -> PyResult<PyMrrReport> {
    let mode: MrrMode = parse(mode)?;
    let entries = grounding::load_run(run_path).map_err(py_err)?;
    let gold = corpus::load_gold_labels(gold_path).map_err(py_err)?;
    Ok(PyMrrReport {
        inner: evalkit::evaluate_run(&entries, &gold, mode).map_err(py_err)?,
    })
}

#[pyfunction]
fn weighted_mrr(mrr_support: f64, mrr_contra: f64, n_support: usize, n_contra: usize) -> PyResult<f64> {
    evalkit::weighted_mrr(mrr_support, mrr_contra, n_support, n_contra).map_err(py_err)
}

#[pyfunction]
fn reciprocal_rank(ranked: Vec<String>, relevant: Vec<String>) -> f64 {
    let gold: BTreeSet<String> = relevant.into_iter().collect();
    evalkit::reciprocal_rank(&ranked, &gold)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    lexindex::tokenize(text).tokens
}

#[pyfunction]
fn segment_sentences(text: &str) -> Vec<String> {
    corpus::segment_sentences(text)
}

fn builtin_patterns() -> &'static NegationPatternSet {
    static SET: OnceLock<NegationPatternSet> = OnceLock::new();
    SET.get_or_init(NegationPatternSet::builtin)
}

/// `(phrase, start, end)` per cue, as character offsets into `sentence`.
#[pyfunction]
fn find_cues(sentence: &str) -> Vec<(String, usize, usize)> {
    let set = builtin_patterns();
    let char_at = |byte: usize| sentence[..byte].chars().count();
    negation::find_cues(sentence, set)
        .into_iter()
        .map(|m| {
            let phrase = set.pattern(m.pattern_id).map(|p| p.phrase.clone()).unwrap_or_default();
            (phrase, char_at(m.start), char_at(m.end))
        })
        .collect()
}

#[pyfunction]
fn cue_count(text: &str) -> usize {
    negation::cue_count(text, builtin_patterns())
}

#[pyfunction]
fn mock_rerank(query: &str, passages: Vec<String>) -> PyResult<Vec<f64>> {
    let passages: Vec<Passage> = passages
        .into_iter()
        .enumerate()
        .map(|(i, text)| Passage::new(i.to_string(), text))
        .collect();
    MockReranker.score(query, &passages).map_err(py_err)
}

/// `(entail, contradict, neutral)`.
#[pyfunction]
fn mock_nli(premise: &str, hypothesis: &str) -> (f64, f64, f64) {
    let v = MockNli::new().verdict(premise, hypothesis);
    (v.p_entail, v.p_contradict, v.p_neutral)
}

#[pyfunction]
fn mock_embed(text: &str) -> PyResult<Vec<f64>> {
    Ok(MockEmbedder::default().embed_one(text).map_err(py_err)?.values)
}

/// Fuses ranked doc_id lists; returns `(doc_id, score)` pairs.
#[pyfunction]
#[pyo3(signature = (lists, k = fusion::DEFAULT_K_RRF, pool_cap = fusion::DEFAULT_POOL_CAP))]
fn rrf_fuse(lists: Vec<Vec<String>>, k: f64, pool_cap: usize) -> PyResult<Vec<(String, f64)>> {
    let config = RrfConfig { k_rrf: k, pool_cap };
    config.validate().map_err(py_err)?;
    let lists: Vec<Vec<RankedCandidate>> = lists
        .into_iter()
        .map(|ids| {
            ids.into_iter()
                .enumerate()
                .map(|(i, doc_id)| RankedCandidate {
                    doc_id,
                    score: 0.0,
                    rank: i + 1,
                })
                .collect()
        })
        .collect();
    Ok(hits(fusion::rrf_fuse(&lists, &config)))
}

#[pyfunction]
#[pyo3(signature = (mean_p_con, mean_p_ent, cue_count, lam = fusion::DEFAULT_LAMBDA, gamma = fusion::DEFAULT_GAMMA, cue_cap = fusion::DEFAULT_CUE_CAP))]
fn penalty_score(mean_p_con: f64, mean_p_ent: f64, cue_count: usize, lam: f64, gamma: f64, cue_cap: usize) -> PyResult<f64> {
    let config = AdversarialConfig {
        lambda: lam,
        gamma,
        cue_cap,
        ..AdversarialConfig::default()
    };
    config.validate().map_err(py_err)?;
    Ok(fusion::penalty_score(mean_p_con, mean_p_ent, cue_count, &config))
}

#[pymodule(name = "contraground")]
pub fn contraground(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDocument>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyIndex>()?;
    m.add_class::<PyGroundingTopic>()?;
    m.add_class::<PyGroundingResult>()?;
    m.add_class::<PyGrounder>()?;
    m.add_class::<PyAttributedAnswer>()?;
    m.add_class::<PyCitationReport>()?;
    m.add_class::<PyMrrReport>()?;
    m.add_function(wrap_pyfunction!(load_grounding_topics, m)?)?;
    m.add_function(wrap_pyfunction!(parse_citations, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_run, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_mrr, m)?)?;
    m.add_function(wrap_pyfunction!(reciprocal_rank, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(segment_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(find_cues, m)?)?;
    m.add_function(wrap_pyfunction!(cue_count, m)?)?;
    m.add_function(wrap_pyfunction!(mock_rerank, m)?)?;
    m.add_function(wrap_pyfunction!(mock_nli, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    m.add_function(wrap_pyfunction!(rrf_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_score, m)?)?;
    let variants: Vec<&str> = Variant::ALL.iter().map(|v| v.tag()).collect();
    m.add("VARIANTS", variants)?;
    Ok(())
}
