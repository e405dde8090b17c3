//! Deterministic, model-free scorers. Each is a pure function of its text
//! inputs; the inference sidecar's dummy mode mirrors these rules exactly.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lexindex::tokenize;
use crate::negation::{cue_count, NegationPatternSet};

use super::{Embedder, EmbeddingVector, NliClassifier, NliPair, NliVerdict, Passage, Reranker};

pub const MOCK_EMBEDDING_DIM: usize = 256;

pub const MOCK_CONTRADICTION: (f64, f64, f64) = (0.05, 0.90, 0.05);
pub const MOCK_ENTAILMENT: (f64, f64, f64) = (0.90, 0.05, 0.05);
pub const MOCK_NEUTRAL: (f64, f64, f64) = (0.10, 0.10, 0.80);

pub const CONTRADICTION_OVERLAP: f64 = 0.5;
pub const ENTAILMENT_OVERLAP: f64 = 0.7;

fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).tokens.into_iter().collect()
}

/// Jaccard similarity of the two token sets; 0 when both are empty.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Share of the hypothesis' distinct tokens that also occur in the premise.
pub fn hypothesis_overlap(premise: &str, hypothesis: &str) -> f64 {
    let h = token_set(hypothesis);
    if h.is_empty() {
        return 0.0;
    }
    let p = token_set(premise);
    h.intersection(&p).count() as f64 / h.len() as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockReranker;

impl Reranker for MockReranker {
    fn score(&self, query: &str, passages: &[Passage]) -> Result<Vec<f64>> {
        Ok(passages.iter().map(|p| jaccard(query, &p.text)).collect())
    }
}

/// Negation cue plus lexical overlap, the shortcut real NLI models tend to
/// learn:
///
/// * cue in premise and overlap >= 0.5 → contradiction (0.05, 0.90, 0.05)
/// * else overlap >= 0.7 → entailment (0.90, 0.05, 0.05)
/// * else neutral (0.10, 0.10, 0.80)
///
/// Triples are `(entail, contradict, neutral)`.
#[derive(Debug, Clone)]
pub struct MockNli {
    patterns: NegationPatternSet,
}

impl MockNli {
    pub fn new() -> Self {
        MockNli {
            patterns: NegationPatternSet::builtin(),
        }
    }

    pub fn verdict(&self, premise: &str, hypothesis: &str) -> NliVerdict {
        let overlap = hypothesis_overlap(premise, hypothesis);
        // overlap first: cue matching is the expensive half
        let (e, c, n) = if overlap >= CONTRADICTION_OVERLAP && cue_count(premise, &self.patterns) > 0 {
            MOCK_CONTRADICTION
        } else if overlap >= ENTAILMENT_OVERLAP {
            MOCK_ENTAILMENT
        } else {
            MOCK_NEUTRAL
        };
        NliVerdict::new(e, c, n).expect("mock triples are valid distributions")
    }
}

impl Default for MockNli {
    fn default() -> Self {
        Self::new()
    }
}

impl NliClassifier for MockNli {
    fn classify(&self, pairs: &[NliPair]) -> Result<Vec<NliVerdict>> {
        Ok(pairs
            .iter()
            .map(|p| self.verdict(&p.premise, &p.hypothesis))
            .collect())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Feature-hashed bag of tokens: bucket `fnv1a64(token) % dim`, counted, then
/// L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dimension: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder {
            dimension: MOCK_EMBEDDING_DIM,
        }
    }
}

impl MockEmbedder {
    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut values = vec![0.0; self.dimension];
        for t in tokens.iter() {
            values[(fnv1a64(t.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector { values })
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{dense_search, nli, rerank, EmbeddedCorpus, NliLabel};

    #[test]
    fn jaccard_by_hand() {
        // {iron, ferritin} vs {iron, and, ferritin, levels}: 2 / 4
        assert_eq!(jaccard("iron ferritin", "iron and ferritin levels"), 0.5);
        assert_eq!(jaccard("iron ferritin", "unrelated text"), 0.0);
    }

    #[test]
    fn rerank_orders_by_overlap() {
        let ranked = rerank(
            &MockReranker,
            "iron ferritin",
            &[
                Passage::new("d2", "unrelated text"),
                Passage::new("d1", "iron and ferritin levels"),
            ],
        )
        .unwrap();
        assert_eq!(ranked[0].doc_id, "d1");
        assert_eq!(ranked[0].score, 0.5);
        assert_eq!(ranked[1].rank, 2);
    }

    #[test]
    fn rerank_single_and_ties() {
        let one = rerank(&MockReranker, "q", &[Passage::new("x", "q")]).unwrap();
        assert_eq!((one[0].doc_id.as_str(), one[0].rank), ("x", 1));
        let tied = rerank(
            &MockReranker,
            "iron",
            &[Passage::new("b", "iron level"), Passage::new("a", "iron level")],
        )
        .unwrap();
        assert_eq!(tied[0].score, tied[1].score);
        assert_eq!(tied[0].doc_id, "a");
    }

    #[test]
    fn nli_rule_cases() {
        let m = MockNli::new();
        // cue present, overlap 3/3
        let v = nli(&m, "no evidence of relapse in patients", "relapse in patients").unwrap();
        assert_eq!(v.label, NliLabel::Contradiction);
        assert_eq!((v.p_entail, v.p_contradict, v.p_neutral), MOCK_CONTRADICTION);

        let same = "ferritin rises in severe infection";
        assert_eq!(nli(&m, same, same).unwrap().label, NliLabel::Entailment);

        let v = nli(&m, "quantum chromodynamics", "ferritin rises").unwrap();
        assert_eq!(v.label, NliLabel::Neutral);

        assert!(nli(&m, "", "x").is_err());
    }

    #[test]
    fn nli_overlap_thresholds() {
        let m = MockNli::new();
        // overlap 1/2 with a cue: contradiction
        assert!(m.verdict("iron was not measured", "iron ferritin").is_contradiction());
        // overlap 1/3 with a cue: neutral
        assert_eq!(
            m.verdict("iron was not measured", "iron ferritin covid").label,
            NliLabel::Neutral
        );
        // overlap 2/3 without a cue: below the entailment bar
        assert_eq!(
            m.verdict("iron ferritin", "iron ferritin covid").label,
            NliLabel::Neutral
        );
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn embedding_is_unit_length() {
        let e = MockEmbedder::default();
        let v = e.embed_one("Iron and ferritin, iron.").unwrap();
        assert_eq!(v.dimension(), 256);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(e.embed_one("  ").is_err());
    }

    #[test]
    fn dense_self_similarity() {
        let e = MockEmbedder::default();
        let docs = vec![
            Passage::new("d1", "iron deficiency anemia in children"),
            Passage::new("d2", "ferritin in covid"),
        ];
        let corpus = EmbeddedCorpus::build(&e, &docs).unwrap();
        let hits = dense_search(&corpus, &e, "ferritin in covid", 2).unwrap();
        assert_eq!(hits[0].doc_id, "d2");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert!(matches!(
            dense_search(&corpus, &e, "   ", 2),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn dense_dimension_mismatch() {
        let docs = vec![Passage::new("d1", "iron")];
        let corpus = EmbeddedCorpus::build(&MockEmbedder::default(), &docs).unwrap();
        let small = MockEmbedder { dimension: 8 };
        assert!(matches!(
            dense_search(&corpus, &small, "iron", 1),
            Err(Error::DimensionMismatch { expected: 256, found: 8 })
        ));
    }
}
