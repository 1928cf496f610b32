//! Rule-based anaphor detection with regular-expression patterns.

use std::collections::BTreeSet;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Span;
use crate::metrics::prf;

/// Patterns shipped with the crate; see `data/anaphor_rules.txt`.
pub const DEFAULT_RULES: &str = include_str!("../data/anaphor_rules.txt");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("pattern {index} ({pattern:?}) does not compile: {source}")]
    Compile {
        index: usize,
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("rule set is empty")]
    Empty,
    #[error("reading rules: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered patterns, each wrapped in `\b(?:...)\b` so matches never start or
/// end mid-word.
#[derive(Debug, Clone)]
pub struct RuleSet {
    patterns: Vec<String>,
    case_sensitive: bool,
    compiled: Vec<Regex>,
}

impl RuleSet {
    pub fn new<I, S>(patterns: I, case_sensitive: bool) -> Result<Self, RuleError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(Into::into).collect();
        if patterns.is_empty() {
            return Err(RuleError::Empty);
        }
        let compiled = patterns
            .iter()
            .enumerate()
            .map(|(index, p)| {
                RegexBuilder::new(&format!(r"\b(?:{p})\b"))
                    .case_insensitive(!case_sensitive)
                    .build()
                    .map_err(|source| RuleError::Compile {
                        index,
                        pattern: p.clone(),
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            patterns,
            case_sensitive,
            compiled,
        })
    }

    /// One pattern per line; blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, case_sensitive: bool) -> Result<Self, RuleError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            case_sensitive,
        )
    }

    pub fn from_file(path: impl AsRef<Path>, case_sensitive: bool) -> Result<Self, RuleError> {
        Self::parse(&std::fs::read_to_string(path)?, case_sensitive)
    }

    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES, false).expect("bundled rules compile")
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn case_sensitive(&self) -> bool {
        self.case_sensitive
    }
}

/// Every match of every pattern as `(start, end, pattern index)` in
/// character offsets.
fn all_matches(text: &str, rules: &RuleSet) -> Vec<(usize, usize, usize)> {
    let char_at: Vec<usize> = {
        // byte offset -> char offset, including the end position
        let mut v = vec![0; text.len() + 1];
        let mut c = 0;
        for (b, _) in text.char_indices() {
            v[b] = c;
            c += 1;
        }
        v[text.len()] = c;
        v
    };
    let mut out = Vec::new();
    for (pi, re) in rules.compiled.iter().enumerate() {
        for m in re.find_iter(text) {
            if m.start() < m.end() {
                out.push((char_at[m.start()], char_at[m.end()], pi));
            }
        }
    }
    out
}

/// Anaphor spans sorted by start. Overlaps resolve to the longest match,
/// then the earliest pattern, then the earliest start.
pub fn detect_anaphors(text: &str, rules: &RuleSet) -> Vec<Span> {
    let mut matches = all_matches(text, rules);
    matches.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for (s, e, _) in matches {
        if chosen.iter().all(|&(cs, ce)| e <= cs || ce <= s) {
            chosen.push((s, e));
        }
    }
    chosen.sort_unstable();
    chosen
        .into_iter()
        .filter_map(|(s, e)| Span::new(text, s, e))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl DetectionReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f1) = prf(tp, fp, fn_);
        Self {
            precision,
            recall,
            f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }
}

/// Exact-span P/R/F1 within one document. Duplicate spans count once.
pub fn evaluate_detection(predicted: &[Span], gold: &[Span]) -> DetectionReport {
    let p: BTreeSet<(usize, usize)> = predicted.iter().map(|s| (s.start, s.end)).collect();
    let g: BTreeSet<(usize, usize)> = gold.iter().map(|s| (s.start, s.end)).collect();
    let tp = p.intersection(&g).count();
    DetectionReport::from_counts(tp, p.len() - tp, g.len() - tp)
}
