//! Task A: ground a fixed answer sentence with up to three new supporting and
//! up to three contradicting documents.
//!
//! The support and contradiction branches are independent pipelines; the
//! variant decides how each one retrieves and classifies:
//!
//! | variant | support branch                         | contradiction branch                              |
//! |---------|----------------------------------------|---------------------------------------------------|
//! | V1      | BM25 500, BM25 order                   | BM25 500, NLI on every sentence                   |
//! | V2      | RRF(BM25 500, dense 500), fused order  | same fused pool, NLI on every sentence            |
//! | V3      | dense 100, rerank                      | dense 1000, negation gate, NLI                    |
//! | V4      | dense 200, rerank                      | 25 templated dense queries, RRF, penalty scoring  |
//! | V5      | BM25 100, rerank                       | BM25 1000, negation gate, NLI                     |
//!
//! Retrieval queries are `question + " " + answer`; the reranker and the NLI
//! hypothesis use the answer sentence alone.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, GroundingTopic};
use crate::error::{Error, Result};
use crate::fusion::{
    adversarial_score, expand_adversarial_queries, penalty_score, rrf_fuse, AdversarialConfig,
    AdversarialScore, RrfConfig, ADVERSARIAL_SELECTION,
};
use crate::lexindex::{InvertedIndex, RankedCandidate};
use crate::negation::NegationPatternSet;
use crate::scorers::{
    dense_search, rerank, sort_desc_by_score, EmbeddedCorpus, Embedder, NliPair, Passage, Scorers,
};

pub const MAX_SELECTED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "v1")]
    V1NaiveBm25,
    #[serde(rename = "v2")]
    V2HybridRrf,
    #[serde(rename = "v3")]
    V3DenseFilter,
    #[serde(rename = "v4")]
    V4Adversarial,
    #[serde(rename = "v5")]
    V5Bm25Filter,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::V1NaiveBm25,
        Variant::V2HybridRrf,
        Variant::V3DenseFilter,
        Variant::V4Adversarial,
        Variant::V5Bm25Filter,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::V1NaiveBm25 => "v1",
            Variant::V2HybridRrf => "v2",
            Variant::V3DenseFilter => "v3",
            Variant::V4Adversarial => "v4",
            Variant::V5Bm25Filter => "v5",
        }
    }

    pub fn needs_embedder(self) -> bool {
        matches!(
            self,
            Variant::V2HybridRrf | Variant::V3DenseFilter | Variant::V4Adversarial
        )
    }

    fn uses_negation_gate(self) -> bool {
        matches!(self, Variant::V3DenseFilter | Variant::V5Bm25Filter)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let key = lower.split('_').next().unwrap_or_default();
        match key {
            "v1" => Ok(Variant::V1NaiveBm25),
            "v2" => Ok(Variant::V2HybridRrf),
            "v3" => Ok(Variant::V3DenseFilter),
            "v4" => Ok(Variant::V4Adversarial),
            "v5" => Ok(Variant::V5Bm25Filter),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

/// Whether NLI sees single sentences or a whole document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Document,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sentence" => Ok(Granularity::Sentence),
            "document" => Ok(Granularity::Document),
            _ => Err(Error::Config(format!("unknown granularity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantConfig {
    pub variant: Variant,
    pub support_depth: usize,
    /// Contradiction retrieval depth. For V4 this is the per-query depth of
    /// each templated dense query.
    pub contra_depth: usize,
    pub granularity: Granularity,
}

impl VariantConfig {
    pub fn defaults(variant: Variant) -> Self {
        let (support_depth, contra_depth) = match variant {
            Variant::V1NaiveBm25 | Variant::V2HybridRrf => (500, 500),
            Variant::V3DenseFilter | Variant::V5Bm25Filter => (100, 1000),
            Variant::V4Adversarial => (200, crate::fusion::DEFAULT_PER_QUERY_DEPTH),
        };
        VariantConfig {
            variant,
            support_depth,
            contra_depth,
            granularity: Granularity::Sentence,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingConfig {
    pub variant: VariantConfig,
    pub rrf: RrfConfig,
    pub adversarial: AdversarialConfig,
}

impl GroundingConfig {
    pub fn new(variant: Variant) -> Self {
        GroundingConfig {
            variant: VariantConfig::defaults(variant),
            rrf: RrfConfig::default(),
            adversarial: AdversarialConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant.support_depth == 0 || self.variant.contra_depth == 0 {
            return Err(Error::Config("retrieval depths must be >= 1".into()));
        }
        self.rrf.validate()?;
        if self.variant.variant == Variant::V4Adversarial {
            self.adversarial.validate()?;
        }
        Ok(())
    }
}

/// Everything a grounding run reads. All of it is immutable and shared.
#[derive(Clone, Copy)]
pub struct GroundingContext<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a InvertedIndex,
    pub patterns: &'a NegationPatternSet,
    pub scorers: &'a Scorers,
    /// Required by V2, V3 and V4.
    pub dense: Option<&'a EmbeddedCorpus>,
}

/// Embeds every document's full text once for dense retrieval.
pub fn embed_corpus(corpus: &Corpus, embedder: &dyn Embedder) -> Result<EmbeddedCorpus> {
    let passages: Vec<Passage> = corpus
        .iter()
        .map(|d| Passage::new(d.doc_id.clone(), d.full_text()))
        .collect();
    EmbeddedCorpus::build(embedder, &passages)
}

/// Where a returned document came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    /// Branch score: reranker score, BM25/RRF score, NLI contradiction
    /// probability or penalty score depending on the variant.
    pub score: f64,
    /// 1-based rank in the branch's first-stage candidate list.
    pub retrieval_rank: usize,
    /// Sentence whose NLI verdict selected the document, when sentence-level.
    pub sentence_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchOutput {
    /// Full branch ranking before truncation.
    pub ranking: Vec<Evidence>,
    /// The first three entries of the ranking.
    pub selected: Vec<Evidence>,
}

impl BranchOutput {
    fn from_ranking(ranking: Vec<Evidence>) -> Self {
        let selected = ranking.iter().take(MAX_SELECTED).cloned().collect();
        BranchOutput { ranking, selected }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingResult {
    pub topic_id: String,
    pub variant: Variant,
    pub supporting: Vec<Evidence>,
    pub contradicting: Vec<Evidence>,
    pub support_ranking: Vec<Evidence>,
    pub contradiction_ranking: Vec<Evidence>,
}

impl GroundingResult {
    pub fn supporting_ids(&self) -> Vec<&str> {
        self.supporting.iter().map(|e| e.doc_id.as_str()).collect()
    }

    pub fn contradicting_ids(&self) -> Vec<&str> {
        self.contradicting.iter().map(|e| e.doc_id.as_str()).collect()
    }
}

/// `question ⊕ answer`, joined by a single space.
pub fn concat_query(topic: &GroundingTopic) -> String {
    format!("{} {}", topic.question.trim(), topic.answer_sentence.trim())
}

fn dense<'a>(ctx: &GroundingContext<'a>) -> Result<&'a EmbeddedCorpus> {
    ctx.dense
        .ok_or_else(|| Error::Config("variant requires an embedded corpus (embedder backend)".into()))
}

fn bm25(ctx: &GroundingContext<'_>, query: &str, k: usize) -> Vec<RankedCandidate> {
    ctx.index.search(query, k)
}

fn dense_hits(ctx: &GroundingContext<'_>, query: &str, k: usize) -> Result<Vec<RankedCandidate>> {
    dense_search(dense(ctx)?, ctx.scorers.embedder.as_ref(), query, k)
}

fn hybrid(ctx: &GroundingContext<'_>, rrf: &RrfConfig, query: &str, k: usize) -> Result<Vec<RankedCandidate>> {
    let lists = [bm25(ctx, query, k), dense_hits(ctx, query, k)?];
    Ok(rrf_fuse(&lists, rrf))
}

fn document<'a>(ctx: &GroundingContext<'a>, doc_id: &str) -> Result<&'a Document> {
    ctx.corpus
        .get(doc_id)
        .ok_or_else(|| Error::Config(format!("index references unknown document `{doc_id}`")))
}

/// Support branch: retrieve on `q ⊕ s`, drop `old_ids`, then order the rest
/// (reranked against `s` for V3, V4 and V5).
pub fn run_support_pipeline(
    topic: &GroundingTopic,
    ctx: &GroundingContext<'_>,
    config: &GroundingConfig,
) -> Result<BranchOutput> {
    let query = concat_query(topic);
    let depth = config.variant.support_depth;
    let variant = config.variant.variant;
    let candidates = match variant {
        Variant::V1NaiveBm25 | Variant::V5Bm25Filter => bm25(ctx, &query, depth),
        Variant::V2HybridRrf => hybrid(ctx, &config.rrf, &query, depth)?,
        Variant::V3DenseFilter | Variant::V4Adversarial => dense_hits(ctx, &query, depth)?,
    };
    let novel: Vec<RankedCandidate> = candidates
        .into_iter()
        .filter(|c| !topic.old_ids.contains(&c.doc_id))
        .collect();

    let ranking = match variant {
        Variant::V1NaiveBm25 | Variant::V2HybridRrf => novel
            .into_iter()
            .map(|c| Evidence {
                doc_id: c.doc_id,
                score: c.score,
                retrieval_rank: c.rank,
                sentence_index: None,
            })
            .collect(),
        _ => {
            let passages = novel
                .iter()
                .map(|c| Ok(Passage::new(c.doc_id.clone(), document(ctx, &c.doc_id)?.full_text())))
                .collect::<Result<Vec<_>>>()?;
            let retrieval_rank: std::collections::HashMap<&str, usize> =
                novel.iter().map(|c| (c.doc_id.as_str(), c.rank)).collect();
            rerank(ctx.scorers.reranker.as_ref(), &topic.answer_sentence, &passages)?
                .into_iter()
                .map(|r| Evidence {
                    retrieval_rank: retrieval_rank[r.doc_id.as_str()],
                    doc_id: r.doc_id,
                    score: r.score,
                    sentence_index: None,
                })
                .collect()
        }
    };
    Ok(BranchOutput::from_ranking(ranking))
}

/// Contradiction branch. Non-adversarial variants walk the candidate pool in
/// retrieval order and keep every document with a sentence (or, in document
/// mode, a whole text) classified as contradicting the answer; the first
/// three are selected.
pub fn run_contradiction_pipeline(
    topic: &GroundingTopic,
    ctx: &GroundingContext<'_>,
    config: &GroundingConfig,
) -> Result<BranchOutput> {
    let variant = config.variant.variant;
    if variant == Variant::V4Adversarial {
        return adversarial_branch(topic, ctx, config);
    }
    let query = concat_query(topic);
    let depth = config.variant.contra_depth;
    let candidates = match variant {
        Variant::V1NaiveBm25 | Variant::V5Bm25Filter => bm25(ctx, &query, depth),
        Variant::V2HybridRrf => hybrid(ctx, &config.rrf, &query, depth)?,
        Variant::V3DenseFilter => dense_hits(ctx, &query, depth)?,
        Variant::V4Adversarial => unreachable!(),
    };
    let gate = variant.uses_negation_gate();
    let hypothesis = topic.answer_sentence.as_str();

    // (candidate position, sentence index, premise)
    let mut probes: Vec<(usize, Option<usize>, String)> = Vec::new();
    for (pos, c) in candidates.iter().enumerate() {
        let doc = document(ctx, &c.doc_id)?;
        match config.variant.granularity {
            Granularity::Sentence => {
                for (i, s) in doc.sentences.iter().enumerate() {
                    if !gate || ctx.patterns.has_cue(s) {
                        probes.push((pos, Some(i), s.clone()));
                    }
                }
            }
            Granularity::Document => {
                if !gate || doc.sentences.iter().any(|s| ctx.patterns.has_cue(s)) {
                    probes.push((pos, None, doc.full_text()));
                }
            }
        }
    }

    let pairs: Vec<NliPair> = probes
        .iter()
        .map(|(_, _, premise)| NliPair::new(premise.clone(), hypothesis))
        .collect();
    let verdicts = if pairs.is_empty() {
        Vec::new()
    } else {
        ctx.scorers.nli.classify(&pairs)?
    };
    if verdicts.len() != pairs.len() {
        return Err(Error::Config(format!(
            "NLI backend returned {} verdicts for {} pairs",
            verdicts.len(),
            pairs.len()
        )));
    }

    let mut ranking: Vec<Evidence> = Vec::new();
    let mut taken: HashSet<usize> = HashSet::new();
    for ((pos, sentence_index, _), verdict) in probes.iter().zip(&verdicts) {
        if verdict.is_contradiction() && taken.insert(*pos) {
            let c = &candidates[*pos];
            ranking.push(Evidence {
                doc_id: c.doc_id.clone(),
                score: verdict.p_contradict,
                retrieval_rank: c.rank,
                sentence_index: *sentence_index,
            });
        }
    }
    Ok(BranchOutput::from_ranking(ranking))
}

fn adversarial_branch(
    topic: &GroundingTopic,
    ctx: &GroundingContext<'_>,
    config: &GroundingConfig,
) -> Result<BranchOutput> {
    let adv = &config.adversarial;
    let queries = expand_adversarial_queries(&topic.question, &topic.answer_sentence, adv)?;
    let lists = queries
        .iter()
        .map(|q| dense_hits(ctx, q, config.variant.contra_depth))
        .collect::<Result<Vec<_>>>()?;
    let pool = rrf_fuse(&lists, &adv.rrf);

    let mut scored: Vec<(AdversarialScore, usize)> = Vec::with_capacity(pool.len());
    for c in &pool {
        let doc = document(ctx, &c.doc_id)?;
        let s = adversarial_score(
            &topic.answer_sentence,
            doc,
            ctx.scorers.nli.as_ref(),
            ctx.patterns,
            adv,
        )?;
        scored.push((s, c.rank));
    }

    // Threshold-passing documents by S(d), then the rest by S(d).
    let (mut above, mut below): (Vec<_>, Vec<_>) = scored
        .into_iter()
        .partition(|(s, _)| s.mean_p_con >= adv.con_threshold);
    sort_desc_by_score(&mut above, |(s, _)| (s.s_value, s.doc_id.as_str()));
    sort_desc_by_score(&mut below, |(s, _)| (s.s_value, s.doc_id.as_str()));
    let ranking: Vec<Evidence> = above
        .into_iter()
        .chain(below)
        .map(|(s, rank)| {
            debug_assert!(
                (s.s_value - penalty_score(s.mean_p_con, s.mean_p_ent, s.cue_count, adv)).abs() < 1e-9
            );
            Evidence {
                doc_id: s.doc_id,
                score: s.s_value,
                retrieval_rank: rank,
                sentence_index: None,
            }
        })
        .collect();
    debug_assert!(ranking.len() >= ranking.len().min(ADVERSARIAL_SELECTION));
    Ok(BranchOutput::from_ranking(ranking))
}

/// Runs both branches and applies the cross-branch rule: a document chosen
/// as contradicting is removed from the support ranking before the top three
/// supporting documents are taken.
pub fn ground(
    topic: &GroundingTopic,
    ctx: &GroundingContext<'_>,
    config: &GroundingConfig,
) -> Result<GroundingResult> {
    config.validate()?;
    let support = run_support_pipeline(topic, ctx, config)?;
    let contra = run_contradiction_pipeline(topic, ctx, config)?;

    let contradicting = contra.selected;
    let contra_ids: HashSet<&str> = contradicting.iter().map(|e| e.doc_id.as_str()).collect();
    let support_ranking: Vec<Evidence> = support
        .ranking
        .into_iter()
        .filter(|e| !contra_ids.contains(e.doc_id.as_str()))
        .collect();
    let supporting = support_ranking.iter().take(MAX_SELECTED).cloned().collect();

    Ok(GroundingResult {
        topic_id: topic.topic_id.clone(),
        variant: config.variant.variant,
        supporting,
        contradicting,
        support_ranking,
        contradiction_ranking: contra.ranking,
    })
}

/// Grounds every topic on a pool of `jobs` workers. Output keeps topic order.
pub fn ground_all(
    topics: &[GroundingTopic],
    ctx: &GroundingContext<'_>,
    config: &GroundingConfig,
    jobs: usize,
) -> Result<Vec<GroundingResult>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| topics.par_iter().map(|t| ground(t, ctx, config)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Support,
    Contradict,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Support => "support",
            Role::Contradict => "contradict",
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "support" => Ok(Role::Support),
            "contradict" => Ok(Role::Contradict),
            _ => Err(Error::Config(format!("unknown role `{s}`"))),
        }
    }
}

/// One line of a run file:
/// `topic_id \t role \t rank \t doc_id \t score \t variant`, score printed
/// with six decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub topic_id: String,
    pub role: Role,
    pub rank: usize,
    pub doc_id: String,
    pub score: f64,
    pub variant: String,
}

impl fmt::Display for RunEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{:.6}\t{}",
            self.topic_id,
            self.role.as_str(),
            self.rank,
            self.doc_id,
            self.score,
            self.variant
        )
    }
}

impl RunEntry {
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Parse {
            path: "<run>".into(),
            line: line_no,
            message,
        };
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        Ok(RunEntry {
            topic_id: fields[0].to_string(),
            role: fields[1].parse().map_err(|e: Error| bad(e.to_string()))?,
            rank: fields[2]
                .parse()
                .ok()
                .filter(|&r: &usize| r >= 1)
                .ok_or_else(|| bad(format!("invalid rank `{}`", fields[2])))?,
            doc_id: fields[3].to_string(),
            score: fields[4]
                .parse()
                .map_err(|_| bad(format!("invalid score `{}`", fields[4])))?,
            variant: fields[5].to_string(),
        })
    }
}

fn entries(result: &GroundingResult, full: bool) -> Vec<RunEntry> {
    let (support, contra) = if full {
        (&result.support_ranking, &result.contradiction_ranking)
    } else {
        (&result.supporting, &result.contradicting)
    };
    let mut out = Vec::new();
    for (role, list) in [(Role::Support, support), (Role::Contradict, contra)] {
        for (i, e) in list.iter().enumerate() {
            out.push(RunEntry {
                topic_id: result.topic_id.clone(),
                role,
                rank: i + 1,
                doc_id: e.doc_id.clone(),
                score: e.score,
                variant: result.variant.tag().to_string(),
            });
        }
    }
    out
}

/// Selected documents only (ranks 1 to 3).
pub fn run_entries(result: &GroundingResult) -> Vec<RunEntry> {
    entries(result, false)
}

/// Full branch rankings, same line format with unbounded ranks.
pub fn ranking_entries(result: &GroundingResult) -> Vec<RunEntry> {
    entries(result, true)
}

pub fn write_run<W: Write>(mut w: W, entries: &[RunEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(w, "{e}")?;
    }
    Ok(())
}

pub fn read_run<R: BufRead>(r: R) -> Result<Vec<RunEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<run>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(RunEntry::parse_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn load_run(path: impl AsRef<std::path::Path>) -> Result<Vec<RunEntry>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_run(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexindex::Bm25Params;
    use std::collections::BTreeSet;

    struct Fixture {
        corpus: Corpus,
        index: InvertedIndex,
        patterns: NegationPatternSet,
        scorers: Scorers,
        dense: EmbeddedCorpus,
    }

    impl Fixture {
        fn new(docs: Vec<Document>) -> Self {
            let corpus = Corpus::from_documents(docs).unwrap();
            let index = InvertedIndex::build(&corpus, Bm25Params::default()).unwrap();
            let scorers = Scorers::mock();
            let dense = embed_corpus(&corpus, scorers.embedder.as_ref()).unwrap();
            Fixture {
                corpus,
                index,
                patterns: NegationPatternSet::builtin(),
                scorers,
                dense,
            }
        }

        fn ctx(&self) -> GroundingContext<'_> {
            GroundingContext {
                corpus: &self.corpus,
                index: &self.index,
                patterns: &self.patterns,
                scorers: &self.scorers,
                dense: Some(&self.dense),
            }
        }
    }

    fn doc(id: &str, sentences: &[&str]) -> Document {
        Document::new(id, "", sentences.iter().map(|s| s.to_string()).collect())
    }

    fn topic(q: &str, s: &str, old: &[&str]) -> GroundingTopic {
        GroundingTopic {
            topic_id: "t1".into(),
            question: q.into(),
            answer_sentence: s.into(),
            old_ids: old.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        }
    }

    fn negation_fixture() -> Fixture {
        Fixture::new(vec![
            doc("d1", &["Ferritin rises in severe covid infection."]),
            doc(
                "d2",
                &[
                    "Covid cohorts were followed for a year.",
                    "There was no evidence that ferritin rises in severe covid infection.",
                ],
            ),
            doc("d3", &["Iron metabolism in covid patients."]),
            doc("d4", &["Vitamin levels in athletes."]),
        ])
    }

    #[test]
    fn verbatim_restatement_reranks_first() {
        let f = negation_fixture();
        let t = topic("Does ferritin rise?", "Ferritin rises in severe covid infection.", &[]);
        let out = run_support_pipeline(&t, &f.ctx(), &GroundingConfig::new(Variant::V5Bm25Filter))
            .unwrap();
        // Jaccard: d1 = 1.0, d2 = 6/17, d3 = 2/9
        assert_eq!(out.selected[0].doc_id, "d1");
        assert_eq!(out.selected[0].score, 1.0);
        assert_eq!(out.selected[1].doc_id, "d2");
        assert!((out.selected[1].score - 6.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn old_ids_are_excluded() {
        let f = negation_fixture();
        let t = topic("q", "Ferritin rises in severe covid infection.", &["d1"]);
        let out = run_support_pipeline(&t, &f.ctx(), &GroundingConfig::new(Variant::V5Bm25Filter))
            .unwrap();
        assert!(out.ranking.iter().all(|e| e.doc_id != "d1"));
    }

    #[test]
    fn no_hits_means_empty_branches() {
        let f = negation_fixture();
        let t = topic("quark", "Gluon plasma.", &[]);
        let r = ground(&t, &f.ctx(), &GroundingConfig::new(Variant::V5Bm25Filter)).unwrap();
        assert!(r.supporting.is_empty());
        assert!(r.contradicting.is_empty());
    }

    #[test]
    fn cue_sentence_is_selected_as_contradiction() {
        let f = negation_fixture();
        let t = topic("Does ferritin rise?", "Ferritin rises in severe covid infection.", &[]);
        let out =
            run_contradiction_pipeline(&t, &f.ctx(), &GroundingConfig::new(Variant::V5Bm25Filter))
                .unwrap();
        assert_eq!(out.selected.len(), 1);
        assert_eq!(out.selected[0].doc_id, "d2");
        assert_eq!(out.selected[0].sentence_index, Some(1));
        assert_eq!(out.selected[0].score, 0.90);
    }

    #[test]
    fn cue_free_corpus_yields_no_contradictions() {
        let f = Fixture::new(vec![
            doc("a", &["Ferritin rises in infection."]),
            doc("b", &["Ferritin is measured in serum."]),
        ]);
        let t = topic("q", "Ferritin rises in infection.", &[]);
        // V4 backfills by penalty score, so it is exempt.
        for v in Variant::ALL.into_iter().filter(|&v| v != Variant::V4Adversarial) {
            let r = ground(&t, &f.ctx(), &GroundingConfig::new(v)).unwrap();
            assert!(r.contradicting.is_empty(), "{v}");
        }
    }

    // Document mode sees the cue from one sentence and the claim terms from
    // another; sentence mode never puts them in the same premise.
    #[test]
    fn document_mode_merges_cue_and_claim_from_different_sentences() {
        let f = Fixture::new(vec![doc(
            "mix",
            &[
                "Ferritin rises in severe covid infection.",
                "Dosing did not change across sites.",
            ],
        )]);
        let t = topic("q", "Ferritin rises in severe covid infection.", &[]);
        let mut cfg = GroundingConfig::new(Variant::V5Bm25Filter);
        let sentence = run_contradiction_pipeline(&t, &f.ctx(), &cfg).unwrap();
        assert!(sentence.selected.is_empty());
        cfg.variant.granularity = Granularity::Document;
        let document = run_contradiction_pipeline(&t, &f.ctx(), &cfg).unwrap();
        assert_eq!(document.selected[0].doc_id, "mix");
        assert_eq!(document.selected[0].sentence_index, None);
    }

    // Under the hypothesis-normalized overlap rule, adding unrelated sentences
    // to the premise cannot lower the overlap, so a diluted cue sentence is
    // still found in document mode.
    #[test]
    fn dilution_alone_does_not_hide_a_contradiction() {
        let mut sentences = vec!["There was no evidence that ferritin rises in severe covid infection."];
        let filler = [
            "Samples were stored at low temperature.",
            "Cohorts came from three hospitals.",
            "Follow up lasted one year.",
            "Imaging was performed weekly.",
            "Statistical analysis used mixed models.",
            "Ethics approval was obtained.",
            "Data were collected prospectively.",
            "Participants gave written consent.",
            "Funding came from public grants.",
        ];
        sentences.extend(filler);
        let f = Fixture::new(vec![doc("dil", &sentences)]);
        let t = topic("q", "Ferritin rises in severe covid infection.", &[]);
        let mut cfg = GroundingConfig::new(Variant::V5Bm25Filter);
        cfg.variant.granularity = Granularity::Document;
        let out = run_contradiction_pipeline(&t, &f.ctx(), &cfg).unwrap();
        assert_eq!(out.selected.len(), 1);
    }

    #[test]
    fn v1_checks_every_sentence() {
        let f = negation_fixture();
        let t = topic("Does ferritin rise?", "Ferritin rises in severe covid infection.", &[]);
        let out =
            run_contradiction_pipeline(&t, &f.ctx(), &GroundingConfig::new(Variant::V1NaiveBm25))
                .unwrap();
        assert_eq!(out.selected[0].doc_id, "d2");
        // V1 support keeps BM25 order and scores
        let s = run_support_pipeline(&t, &f.ctx(), &GroundingConfig::new(Variant::V1NaiveBm25))
            .unwrap();
        let bm = f.index.search(&concat_query(&t), 500);
        assert_eq!(
            s.ranking.iter().map(|e| &e.doc_id).collect::<Vec<_>>(),
            bm.iter().map(|c| &c.doc_id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn contradiction_has_priority_over_support() {
        let f = negation_fixture();
        let t = topic("Does ferritin rise?", "Ferritin rises in severe covid infection.", &[]);
        let cfg = GroundingConfig::new(Variant::V5Bm25Filter);
        let support = run_support_pipeline(&t, &f.ctx(), &cfg).unwrap();
        assert!(support.selected.iter().any(|e| e.doc_id == "d2"));
        let r = ground(&t, &f.ctx(), &cfg).unwrap();
        assert_eq!(r.contradicting_ids(), vec!["d2"]);
        assert!(!r.supporting_ids().contains(&"d2"));
        assert_eq!(r.supporting_ids(), vec!["d1", "d3", "d4"]);
    }

    #[test]
    fn adversarial_branch_runs() {
        let f = negation_fixture();
        let t = topic("Does ferritin rise?", "Ferritin rises in severe covid infection.", &[]);
        let r = ground(&t, &f.ctx(), &GroundingConfig::new(Variant::V4Adversarial)).unwrap();
        assert_eq!(r.contradicting.len(), 3.min(f.corpus.len()));
        assert_eq!(r.contradicting[0].doc_id, "d2");
    }

    #[test]
    fn dense_variants_need_an_embedded_corpus() {
        let f = negation_fixture();
        let mut ctx = f.ctx();
        ctx.dense = None;
        let t = topic("q", "ferritin", &[]);
        assert!(ground(&t, &ctx, &GroundingConfig::new(Variant::V3DenseFilter)).is_err());
        assert!(ground(&t, &ctx, &GroundingConfig::new(Variant::V5Bm25Filter)).is_ok());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("v5".parse::<Variant>().unwrap(), Variant::V5Bm25Filter);
        assert_eq!("V2_hybrid_rrf".parse::<Variant>().unwrap(), Variant::V2HybridRrf);
        assert!(matches!("v9".parse::<Variant>(), Err(Error::Config(_))));
        let d = VariantConfig::defaults(Variant::V3DenseFilter);
        assert_eq!((d.support_depth, d.contra_depth), (100, 1000));
        assert_eq!(d.granularity, Granularity::Sentence);
        let d = VariantConfig::defaults(Variant::V1NaiveBm25);
        assert_eq!((d.support_depth, d.contra_depth), (500, 500));
    }

    #[test]
    fn run_line_format() {
        let e = RunEntry {
            topic_id: "t1".into(),
            role: Role::Contradict,
            rank: 2,
            doc_id: "123".into(),
            score: 0.9,
            variant: "v5".into(),
        };
        let line = e.to_string();
        assert_eq!(line, "t1\tcontradict\t2\t123\t0.900000\tv5");
        assert_eq!(RunEntry::parse_line(&line, 1).unwrap(), e);
        assert!(RunEntry::parse_line("t1\tsupport\t0\td\t1\tv5", 1).is_err());
        assert!(RunEntry::parse_line("t1\tneither\t1\td\t1\tv5", 1).is_err());
    }
}
