//! Reciprocal rank, class-weighted MRR, selection precision/recall/F1 and
//! citation metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{AnswerRecord, ViolationKind};
use crate::corpus::{GoldLabel, Label};
use crate::error::{Error, Result};
use crate::grounding::{Role, RunEntry, MAX_SELECTED};

/// `1 / position` of the first gold id, 0 when none is present.
pub fn reciprocal_rank<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>) -> f64 {
    ranked
        .iter()
        .position(|d| gold.contains(d.as_ref()))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// Class-weighted mean of the two MRRs.
pub fn weighted_mrr(mrr_s: f64, mrr_c: f64, n_s: usize, n_c: usize) -> Result<f64> {
    let total = n_s + n_c;
    if total == 0 {
        return Err(Error::Evaluation("weighted MRR over zero topics".into()));
    }
    Ok((n_s as f64 * mrr_s + n_c as f64 * mrr_c) / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MrrMode {
    /// Full branch ranking before truncation.
    RankList,
    /// Only the (at most three) selected documents.
    Top3,
}

impl MrrMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MrrMode::RankList => "rank-list",
            MrrMode::Top3 => "top3",
        }
    }
}

impl FromStr for MrrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank-list" => Ok(MrrMode::RankList),
            "top3" | "top-3" => Ok(MrrMode::Top3),
            _ => Err(Error::Config(format!("unknown MRR mode `{s}` (rank-list|top3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRr {
    pub topic_id: String,
    pub label: Label,
    pub reciprocal_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrrReport {
    pub mode: MrrMode,
    pub mrr_support: f64,
    pub mrr_contra: f64,
    pub n_support: usize,
    pub n_contra: usize,
    pub weighted_mrr: f64,
    pub per_topic: Vec<TopicRr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub selected: usize,
    pub relevant: usize,
}

impl ClassPrf {
    /// Micro-averaged from pooled counts; each ratio is 0 when undefined.
    pub fn from_counts(true_positives: usize, selected: usize, relevant: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, selected);
        let recall = ratio(true_positives, relevant);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassPrf {
            precision,
            recall,
            f1,
            true_positives,
            selected,
            relevant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionPrf {
    pub support: ClassPrf,
    pub contradiction: ClassPrf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub mrr: MrrReport,
    pub selection: SelectionPrf,
}

#[derive(Default)]
struct GoldSets {
    support: BTreeSet<String>,
    contra: BTreeSet<String>,
}

fn label_for(role: Role) -> Label {
    match role {
        Role::Support => Label::Support,
        Role::Contradict => Label::Contradict,
    }
}

/// Scores a run against gold labels. Gold topics absent from the run count
/// with reciprocal rank 0; a run topic without gold labels is an error.
pub fn evaluate_run(entries: &[RunEntry], gold: &[GoldLabel], mode: MrrMode) -> Result<RunEvaluation> {
    let mut gold_by_topic: BTreeMap<&str, GoldSets> = BTreeMap::new();
    for g in gold {
        let sets = gold_by_topic.entry(g.topic_id.as_str()).or_default();
        match g.label {
            Label::Support => sets.support.insert(g.doc_id.clone()),
            Label::Contradict => sets.contra.insert(g.doc_id.clone()),
        };
    }

    let mut ranked: BTreeMap<(&str, Role), Vec<(usize, &str)>> = BTreeMap::new();
    for e in entries {
        if !gold_by_topic.contains_key(e.topic_id.as_str()) {
            return Err(Error::Evaluation(format!(
                "run references topic `{}` with no gold labels",
                e.topic_id
            )));
        }
        ranked
            .entry((e.topic_id.as_str(), e.role))
            .or_default()
            .push((e.rank, e.doc_id.as_str()));
    }
    for list in ranked.values_mut() {
        list.sort();
        let mut seen = BTreeSet::new();
        list.retain(|(_, d)| seen.insert(*d));
    }
    let list_for = |topic: &str, role: Role, cap: usize| -> Vec<&str> {
        ranked
            .get(&(topic, role))
            .map(|l| l.iter().filter(|(r, _)| *r <= cap).map(|(_, d)| *d).collect())
            .unwrap_or_default()
    };
    let cap = match mode {
        MrrMode::RankList => usize::MAX,
        MrrMode::Top3 => MAX_SELECTED,
    };

    let mut per_topic = Vec::new();
    let (mut sum_s, mut sum_c, mut n_s, mut n_c) = (0.0, 0.0, 0usize, 0usize);
    let (mut tp, mut sel, mut rel) = ([0usize; 2], [0usize; 2], [0usize; 2]);
    for (topic, sets) in &gold_by_topic {
        for (k, (role, gold_set)) in [(Role::Support, &sets.support), (Role::Contradict, &sets.contra)]
            .into_iter()
            .enumerate()
        {
            let selection = list_for(topic, role, MAX_SELECTED);
            tp[k] += selection.iter().filter(|d| gold_set.contains(**d)).count();
            sel[k] += selection.len();
            rel[k] += gold_set.len();
            if gold_set.is_empty() {
                continue;
            }
            let rr = reciprocal_rank(&list_for(topic, role, cap), gold_set);
            per_topic.push(TopicRr {
                topic_id: topic.to_string(),
                label: label_for(role),
                reciprocal_rank: rr,
            });
            match role {
                Role::Support => {
                    sum_s += rr;
                    n_s += 1;
                }
                Role::Contradict => {
                    sum_c += rr;
                    n_c += 1;
                }
            }
        }
    }

    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let (mrr_support, mrr_contra) = (mean(sum_s, n_s), mean(sum_c, n_c));
    Ok(RunEvaluation {
        mrr: MrrReport {
            mode,
            mrr_support,
            mrr_contra,
            n_support: n_s,
            n_contra: n_c,
            weighted_mrr: weighted_mrr(mrr_support, mrr_contra, n_s, n_c)?,
            per_topic,
        },
        selection: SelectionPrf {
            support: ClassPrf::from_counts(tp[0], sel[0], rel[0]),
            contradiction: ClassPrf::from_counts(tp[1], sel[1], rel[1]),
        },
    })
}

/// Plain-text comparison table, best weighted MRR first.
pub fn format_mrr_table(rows: &[(String, MrrReport)]) -> String {
    let mut order: Vec<&(String, MrrReport)> = rows.iter().collect();
    order.sort_by(|a, b| {
        b.1.weighted_mrr
            .total_cmp(&a.1.weighted_mrr)
            .then_with(|| a.0.cmp(&b.0))
    });
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(3);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>12}  {:>4}",
        "Run", "MRR Sup", "MRR Con", "Weighted MRR", "Rank"
    );
    for (rank, (name, r)) in order.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.3}  {:>7.3}  {:>12.3}  {:>4}",
            name,
            r.mrr_support,
            r.mrr_contra,
            r.weighted_mrr,
            rank + 1
        );
    }
    out
}

pub fn format_prf(prf: &SelectionPrf) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<13}  {:>9}  {:>6}  {:>6}", "Class", "Precision", "Recall", "F1");
    for (name, c) in [("support", &prf.support), ("contradiction", &prf.contradiction)] {
        let _ = writeln!(
            out,
            "{:<13}  {:>9.3}  {:>6.3}  {:>6.3}",
            name, c.precision, c.recall, c.f1
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationSummary {
    pub answers: usize,
    pub sentences: usize,
    /// Cited sentences over all sentences.
    pub coverage: f64,
    pub avg_citations_per_sentence: f64,
    pub avg_sentences_per_answer: f64,
    pub violations: BTreeMap<String, usize>,
}

/// Pools sentences across answers. Reports are recomputed rather than read
/// back from the records.
pub fn citation_summary(records: &[AnswerRecord]) -> CitationSummary {
    let mut sentences = 0usize;
    let mut cited = 0usize;
    let mut citations = 0usize;
    let mut violations: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let report = crate::attribution::validate_answer(&r.answer());
        sentences += report.sentence_count;
        cited += r.sentences.iter().filter(|s| !s.indices.is_empty()).count();
        citations += r.sentences.iter().map(|s| s.indices.len()).sum::<usize>();
        for v in report.violations {
            *violations.entry(v.kind.to_string()).or_default() += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    CitationSummary {
        answers: records.len(),
        sentences,
        coverage: if sentences == 0 { 1.0 } else { ratio(cited, sentences) },
        avg_citations_per_sentence: ratio(citations, sentences),
        avg_sentences_per_answer: ratio(sentences, records.len()),
        violations,
    }
}

pub fn format_citation_summary(s: &CitationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "answers             {}", s.answers);
    let _ = writeln!(out, "sentences           {}", s.sentences);
    let _ = writeln!(out, "coverage            {:.1}%", 100.0 * s.coverage);
    let _ = writeln!(out, "avg citations/sent  {:.2}", s.avg_citations_per_sentence);
    let _ = writeln!(out, "avg sentences       {:.2}", s.avg_sentences_per_answer);
    for kind in [
        ViolationKind::EmptyAnswer,
        ViolationKind::UncitedSentence,
        ViolationKind::TooManyCitations,
        ViolationKind::UnknownIndex,
        ViolationKind::WordLimit,
    ] {
        let key = kind.to_string();
        let _ = writeln!(out, "{key:<20}{}", s.violations.get(&key).copied().unwrap_or(0));
    }
    out
}
