//! Exact-match micro-F1 over predicted and gold antecedent sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combine::canonicalize;
use crate::corpus::Example;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and gold key sets differ (e.g. {0})")]
    KeyMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleCounts {
    pub key: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_example: Vec<ExampleCounts>,
}

/// P, R and F1 from pooled counts; each ratio is 0 when its denominator is 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn canonical_set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items.iter().filter_map(|s| canonicalize(s.as_ref())).collect()
}

/// Micro-averaged exact-match scores. Surfaces are canonicalized on both
/// sides, so order and duplicates do not matter.
pub fn micro_f1<S: AsRef<str>>(
    predictions: &BTreeMap<String, Vec<S>>,
    gold: &BTreeMap<String, Vec<S>>,
) -> Result<ScoreReport, MetricsError> {
    if let Some(k) = predictions
        .keys()
        .find(|k| !gold.contains_key(*k))
        .or_else(|| gold.keys().find(|k| !predictions.contains_key(*k)))
    {
        return Err(MetricsError::KeyMismatch(k.clone()));
    }
    let mut per_example = Vec::with_capacity(gold.len());
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (key, g) in gold {
        let g = canonical_set(g);
        let p = canonical_set(&predictions[key]);
        let hit = p.intersection(&g).count();
        let c = ExampleCounts {
            key: key.clone(),
            tp: hit,
            fp: p.len() - hit,
            fn_: g.len() - hit,
        };
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
        per_example.push(c);
    }
    let (precision, recall, f1) = prf(tp, fp, fn_);
    Ok(ScoreReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        per_example,
    })
}

/// Gold surface lists keyed by example key string.
pub fn gold_map(examples: &[Example]) -> BTreeMap<String, Vec<String>> {
    examples
        .iter()
        .map(|e| {
            let g = e
                .gold_antecedents
                .iter()
                .flatten()
                .map(|s| s.surface.clone())
                .collect();
            (e.key().to_string(), g)
        })
        .collect()
}

impl ScoreReport {
    /// Aligned-column text table: one row per example, then the totals.
    pub fn to_table(&self) -> String {
        let width = self
            .per_example
            .iter()
            .map(|e| e.key.len())
            .chain(std::iter::once("example".len()))
            .max()
            .unwrap_or(7);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}", "example", "tp", "fp", "fn");
        for e in &self.per_example {
            let _ = writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}", e.key, e.tp, e.fp, e.fn_);
        }
        let _ = writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}", "TOTAL", self.tp, self.fp, self.fn_);
        let _ = writeln!(
            out,
            "precision {:.4}  recall {:.4}  f1 {:.4}",
            self.precision, self.recall, self.f1
        );
        out
    }
}
