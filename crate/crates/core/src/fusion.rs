//! Reciprocal rank fusion and multi-query adversarial contradiction scoring.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::lexindex::{rank_scored, RankedCandidate};
use crate::negation::{document_cue_count, NegationPatternSet};
use crate::scorers::{nli_two_way_mean, sort_desc_by_score, NliClassifier};

pub const DEFAULT_K_RRF: f64 = 60.0;
pub const DEFAULT_POOL_CAP: usize = 1200;

pub const ADVERSARIAL_TEMPLATE_COUNT: usize = 25;
pub const DEFAULT_PER_QUERY_DEPTH: usize = 200;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_CUE_CAP: usize = 6;
pub const DEFAULT_CON_THRESHOLD: f64 = 0.35;
pub const ADVERSARIAL_SELECTION: usize = 3;

const BUILTIN_TEMPLATES: &str = include_str!("../data/adversarial_templates.txt");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrfConfig {
    pub k_rrf: f64,
    pub pool_cap: usize,
}

impl Default for RrfConfig {
    fn default() -> Self {
        RrfConfig {
            k_rrf: DEFAULT_K_RRF,
            pool_cap: DEFAULT_POOL_CAP,
        }
    }
}

impl RrfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_rrf > 0.0) || self.pool_cap == 0 {
            return Err(Error::Config(format!(
                "RRF requires k > 0 and pool cap >= 1 (got k={}, cap={})",
                self.k_rrf, self.pool_cap
            )));
        }
        Ok(())
    }
}

/// Fuses ranked lists: `score(d) = Σ 1 / (k + rank_i(d))` over the lists that
/// contain `d`, where `rank_i` is the 1-based position in list `i`. A
/// document repeated within one list counts at its first position only.
///
/// Contributions are summed in ascending order so the result does not depend
/// on the order of the input lists.
pub fn rrf_fuse(lists: &[Vec<RankedCandidate>], config: &RrfConfig) -> Vec<RankedCandidate> {
    let mut contributions: HashMap<&str, Vec<f64>> = HashMap::new();
    for list in lists {
        let mut seen = std::collections::HashSet::new();
        for (pos, c) in list.iter().enumerate() {
            if seen.insert(c.doc_id.as_str()) {
                contributions
                    .entry(c.doc_id.as_str())
                    .or_default()
                    .push(1.0 / (config.k_rrf + (pos + 1) as f64));
            }
        }
    }
    let scored = contributions
        .into_iter()
        .map(|(id, mut parts)| {
            parts.sort_by(f64::total_cmp);
            (id.to_string(), parts.iter().sum())
        })
        .collect();
    rank_scored(scored, config.pool_cap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialConfig {
    pub templates: Vec<String>,
    pub per_query_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub cue_cap: usize,
    pub con_threshold: f64,
    pub rrf: RrfConfig,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            templates: parse_templates(BUILTIN_TEMPLATES),
            per_query_depth: DEFAULT_PER_QUERY_DEPTH,
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
            cue_cap: DEFAULT_CUE_CAP,
            con_threshold: DEFAULT_CON_THRESHOLD,
            rrf: RrfConfig::default(),
        }
    }
}

fn parse_templates(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

impl AdversarialConfig {
    pub fn with_template_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.templates = parse_templates(&text);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.len() != ADVERSARIAL_TEMPLATE_COUNT {
            return Err(Error::Config(format!(
                "expected {ADVERSARIAL_TEMPLATE_COUNT} adversarial templates, found {}",
                self.templates.len()
            )));
        }
        for t in &self.templates {
            check_placeholders(t)?;
        }
        if !(0.0..=1.0).contains(&self.con_threshold) {
            return Err(Error::Config(format!(
                "contradiction threshold {} outside [0, 1]",
                self.con_threshold
            )));
        }
        if self.cue_cap == 0 || self.per_query_depth == 0 {
            return Err(Error::Config("cue cap and per-query depth must be >= 1".into()));
        }
        self.rrf.validate()
    }
}

fn check_placeholders(template: &str) -> Result<()> {
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| {
            Error::Config(format!("unterminated placeholder in template `{template}`"))
        })?;
        let name = &after[..close];
        if name != "Q" && name != "A" {
            return Err(Error::Config(format!(
                "unknown placeholder {{{name}}} in template `{template}`"
            )));
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

/// Instantiates every template with `{Q}` → question and `{A}` → answer, in
/// template order.
pub fn expand_adversarial_queries(
    question: &str,
    answer: &str,
    config: &AdversarialConfig,
) -> Result<Vec<String>> {
    config
        .templates
        .iter()
        .map(|t| {
            check_placeholders(t)?;
            Ok(t.replace("{Q}", question).replace("{A}", answer))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialScore {
    pub doc_id: String,
    pub mean_p_con: f64,
    pub mean_p_ent: f64,
    pub cue_count: usize,
    pub s_value: f64,
}

/// `mean_p_con − λ·mean_p_ent + γ·min(cues, C)/C`
pub fn penalty_score(mean_p_con: f64, mean_p_ent: f64, cue_count: usize, config: &AdversarialConfig) -> f64 {
    let cap = config.cue_cap as f64;
    mean_p_con - config.lambda * mean_p_ent
        + config.gamma * (cue_count.min(config.cue_cap) as f64) / cap
}

impl AdversarialScore {
    pub fn from_parts(
        doc_id: impl Into<String>,
        mean_p_con: f64,
        mean_p_ent: f64,
        cue_count: usize,
        config: &AdversarialConfig,
    ) -> Self {
        AdversarialScore {
            doc_id: doc_id.into(),
            mean_p_con,
            mean_p_ent,
            cue_count,
            s_value: penalty_score(mean_p_con, mean_p_ent, cue_count, config),
        }
    }
}

/// Two-way NLI between the claim and the document's full text, plus the
/// document's negation cue count.
pub fn adversarial_score(
    claim: &str,
    document: &Document,
    nli: &dyn NliClassifier,
    patterns: &NegationPatternSet,
    config: &AdversarialConfig,
) -> Result<AdversarialScore> {
    let text = document.full_text();
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mean = nli_two_way_mean(nli, claim, &text)?;
    let cues = document_cue_count(document, patterns);
    Ok(AdversarialScore::from_parts(
        document.doc_id.clone(),
        mean.p_contradict,
        mean.p_entail,
        cues,
        config,
    ))
}

/// Up to three ids: documents with `mean_p_con >= threshold` by descending
/// S(d), then backfilled from the remaining documents by S(d). Ties break on
/// ascending doc_id.
pub fn select_contradictions_adversarial(
    scored: &[AdversarialScore],
    config: &AdversarialConfig,
) -> Vec<String> {
    let mut ranked: Vec<&AdversarialScore> = scored.iter().collect();
    sort_desc_by_score(&mut ranked, |s| (s.s_value, s.doc_id.as_str()));

    let mut chosen: Vec<String> = ranked
        .iter()
        .filter(|s| s.mean_p_con >= config.con_threshold)
        .take(ADVERSARIAL_SELECTION)
        .map(|s| s.doc_id.clone())
        .collect();
    for s in &ranked {
        if chosen.len() >= ADVERSARIAL_SELECTION {
            break;
        }
        if !chosen.contains(&s.doc_id) {
            chosen.push(s.doc_id.clone());
        }
    }
    chosen
}
