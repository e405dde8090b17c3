//! Clinical negation cue detection.
//!
//! Cues are matched per sentence, case-insensitively, leftmost-longest and
//! without overlap. A cue must begin at a word boundary; in literal mode it
//! must also end at one, so `no` never fires inside `normal`.

use std::collections::HashSet;
use std::path::Path;

use crate::corpus::{segment_sentences, Document};
use crate::error::{Error, Result};

pub const BUILTIN_SOURCE: &str = "builtin-23";
pub const BUILTIN_PATTERN_COUNT: usize = 23;

const BUILTIN_PATTERNS: &str = include_str!("../data/negation_patterns.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Word boundary on both sides.
    WordBoundary,
    /// Word boundary before the phrase only.
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationPattern {
    pub id: usize,
    pub phrase: String,
    pub mode: MatchMode,
    chars: Vec<char>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationPatternSet {
    patterns: Vec<NegationPattern>,
    source: String,
}

/// One cue occurrence; `start..end` is a byte span into the sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegationMatch {
    pub pattern_id: usize,
    pub start: usize,
    pub end: usize,
}

impl NegationPatternSet {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PATTERNS, BUILTIN_SOURCE).expect("builtin negation patterns are valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses pattern-file text. Pattern ids follow line order.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        let mut seen = HashSet::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, mode) = match line.strip_suffix('*') {
                Some(p) => (p.trim_end(), MatchMode::Prefix),
                None => (line, MatchMode::WordBoundary),
            };
            let phrase = phrase.split_whitespace().collect::<Vec<_>>().join(" ");
            if phrase.is_empty() {
                return Err(Error::Config(format!("{source}: empty negation pattern")));
            }
            if phrase.chars().any(char::is_uppercase) {
                return Err(Error::Config(format!(
                    "{source}: negation pattern `{phrase}` must be lowercase"
                )));
            }
            if !seen.insert(phrase.clone()) {
                return Err(Error::Config(format!(
                    "{source}: duplicate negation pattern `{phrase}`"
                )));
            }
            patterns.push(NegationPattern {
                id: patterns.len(),
                chars: phrase.chars().collect(),
                phrase,
                mode,
            });
        }
        if patterns.is_empty() {
            return Err(Error::Config(format!("{source}: no negation patterns")));
        }
        Ok(NegationPatternSet {
            patterns,
            source: source.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn patterns(&self) -> &[NegationPattern] {
        &self.patterns
    }

    pub fn pattern(&self, id: usize) -> Option<&NegationPattern> {
        self.patterns.get(id)
    }

    pub fn find_cues(&self, sentence: &str) -> Vec<NegationMatch> {
        find_cues(sentence, self)
    }

    pub fn has_cue(&self, sentence: &str) -> bool {
        !find_cues(sentence, self).is_empty()
    }
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    if a.is_ascii() && b.is_ascii() {
        return a.eq_ignore_ascii_case(&b);
    }
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn match_at(chars: &[(usize, char)], at: usize, pattern: &NegationPattern) -> Option<usize> {
    let n = pattern.chars.len();
    if at + n > chars.len() {
        return None;
    }
    for (k, &pc) in pattern.chars.iter().enumerate() {
        if !chars_eq_ignore_case(chars[at + k].1, pc) {
            return None;
        }
    }
    let end = at + n;
    if pattern.mode == MatchMode::WordBoundary
        && end < chars.len()
        && chars[end].1.is_alphanumeric()
    {
        return None;
    }
    Some(end)
}

/// All non-overlapping cue matches in one sentence, leftmost-longest.
pub fn find_cues(sentence: &str, patterns: &NegationPatternSet) -> Vec<NegationMatch> {
    let chars: Vec<(usize, char)> = sentence.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(sentence.len(), |c| c.0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let at_boundary = i == 0 || !chars[i - 1].1.is_alphanumeric();
        if at_boundary && chars[i].1.is_alphanumeric() {
            let best = patterns
                .patterns
                .iter()
                .filter_map(|p| match_at(&chars, i, p).map(|end| (end, p.id)))
                // longest wins; on equal length the earlier pattern wins
                .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
            if let Some((end, id)) = best {
                out.push(NegationMatch {
                    pattern_id: id,
                    start: byte_at(i),
                    end: byte_at(end),
                });
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Number of cue matches in `text`, summed over its sentences.
pub fn cue_count(text: &str, patterns: &NegationPatternSet) -> usize {
    segment_sentences(text)
        .iter()
        .map(|s| find_cues(s, patterns).len())
        .sum()
}

/// Cue count over a document's title and given sentences.
pub fn document_cue_count(doc: &Document, patterns: &NegationPatternSet) -> usize {
    let title = if doc.title.trim().is_empty() {
        0
    } else {
        cue_count(&doc.title, patterns)
    };
    title
        + doc
            .sentences
            .iter()
            .map(|s| find_cues(s, patterns).len())
            .sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSentence {
    pub index: usize,
    pub text: String,
    pub matches: Vec<NegationMatch>,
}

/// The sentences of `doc` with at least one cue, in document order.
pub fn filter_negative_sentences(
    doc: &Document,
    patterns: &NegationPatternSet,
) -> Vec<NegativeSentence> {
    doc.sentences
        .iter()
        .enumerate()
        .filter_map(|(index, s)| {
            let matches = find_cues(s, patterns);
            (!matches.is_empty()).then(|| NegativeSentence {
                index,
                text: s.clone(),
                matches,
            })
        })
        .collect()
}
