//! Pseudo-labeling of unlabeled protocols for training a token-classification
//! student.
//!
//! Anaphors found by the detector are resolved by the teacher pipeline. Each
//! predicted antecedent surface is aligned to the occurrence of its token
//! sequence nearest before the anaphor, and the record is tagged B/I/O.
//! The anaphor is bracketed by `[Ana-start]` and `[Ana-end]`, both tagged O.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anaphor::{detect_anaphors, RuleSet};
use crate::corpus::{Example, KShotSample, Span};
use crate::lm::Tokenizer;
use crate::pipeline::{ManifestEntry, PipelineError, Resolver, RunConfig};
use crate::rng::SplitMix64;

pub const ANA_START: &str = "[Ana-start]";
pub const ANA_END: &str = "[Ana-end]";

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("asked for {requested} pseudo-labeled examples but only {available} anaphors were detected")]
    NotEnoughAnaphors { requested: usize, available: usize },
    #[error("malformed unlabeled document at line {line}: {message}")]
    Document { line: usize, message: String },
    #[error("backend failed on {failed_key} after {} record(s): {message}", completed.len())]
    Backend {
        failed_key: String,
        message: String,
        completed: Vec<PseudoLabeledRecord>,
    },
    #[error("record {0} is invalid: {1}")]
    InvalidRecord(String, String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledDoc {
    pub doc_id: String,
    pub text: String,
}

/// Reads `{"doc_id": ..., "text": ...}` lines. Other fields (for example a
/// labeled corpus's spans) are ignored; repeated doc ids keep the first.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Vec<UnlabeledDoc>, DistillError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut seen = BTreeSet::new();
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: UnlabeledDoc = serde_json::from_str(&line).map_err(|e| DistillError::Document {
            line: i + 1,
            message: e.to_string(),
        })?;
        if seen.insert(doc.doc_id.clone()) {
            docs.push(doc);
        }
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        })
    }
}

/// One tagged antecedent: tokens `start..end` of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledRecord {
    pub doc_id: String,
    pub anaphor: Span,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    pub runs: Vec<LabeledRun>,
}

impl PseudoLabeledRecord {
    /// Checks tag/token lengths, marker placement and BIO well-formedness.
    pub fn validate(&self) -> Result<(), String> {
        if self.tokens.len() != self.tags.len() {
            return Err(format!("{} tokens but {} tags", self.tokens.len(), self.tags.len()));
        }
        let starts: Vec<usize> = positions(&self.tokens, ANA_START);
        let ends: Vec<usize> = positions(&self.tokens, ANA_END);
        match (starts.as_slice(), ends.as_slice()) {
            ([s], [e]) if s < e => {
                if self.tags[*s] != Tag::O || self.tags[*e] != Tag::O {
                    return Err("marker tokens must be tagged O".into());
                }
            }
            _ => return Err("markers must appear once each, start before end".into()),
        }
        for (i, t) in self.tags.iter().enumerate() {
            if *t == Tag::I && (i == 0 || self.tags[i - 1] == Tag::O) {
                return Err(format!("I without a preceding B at token {i}"));
            }
        }
        Ok(())
    }
}

fn positions(tokens: &[String], marker: &str) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.as_str() == marker)
        .map(|(i, _)| i)
        .collect()
}

/// Why a predicted surface left no tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// The surface's tokens do not occur before the anaphor.
    Unaligned,
    /// Its nearest occurrence overlaps a run tagged for a likelier candidate.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSurface {
    pub key: String,
    pub surface: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub key: String,
    pub reason: String,
}

/// Bookkeeping for one distillation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillManifest {
    pub detected: usize,
    pub requested: usize,
    pub exported: usize,
    pub dropped_surfaces: Vec<DroppedSurface>,
    pub skipped_examples: Vec<SkippedExample>,
}

/// Non-blank tokens of `text` with their character offsets.
fn word_tokens(text: &str, tokenizer: &dyn Tokenizer) -> Vec<(String, usize, usize)> {
    let pieces = tokenizer.tokenize(text);
    let mut out = Vec::new();
    let mut pos = 0;
    for p in pieces {
        let len = p.chars().count();
        let lead = p.chars().take_while(|c| c.is_whitespace()).count();
        let trimmed = p.trim();
        if !trimmed.is_empty() {
            let start = pos + lead;
            out.push((trimmed.to_string(), start, start + trimmed.chars().count()));
        }
        pos += len;
    }
    out
}

/// Start index of the occurrence of `needle` in `hay[..limit]` that ends
/// latest, if any.
pub fn nearest_occurrence(hay: &[String], needle: &[String], limit: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > limit {
        return None;
    }
    (0..=limit - needle.len())
        .rev()
        .find(|&s| hay[s..s + needle.len()] == *needle)
}

/// Builds the tagged record for one resolved anaphor. `predictions` are
/// `(surface, confidence)` pairs, most confident first.
pub fn build_record(
    doc_id: &str,
    text: &str,
    anaphor: &Span,
    predictions: &[(String, f64)],
    tokenizer: &dyn Tokenizer,
) -> (PseudoLabeledRecord, Vec<(String, DropReason)>) {
    let words = word_tokens(text, tokenizer);
    let first_ana = words
        .iter()
        .position(|(_, s, _)| *s >= anaphor.start)
        .unwrap_or(words.len());
    let after_ana = words
        .iter()
        .position(|(_, s, _)| *s >= anaphor.end)
        .unwrap_or(words.len())
        .max(first_ana);
    let doc_tokens: Vec<String> = words.iter().map(|(t, _, _)| t.clone()).collect();

    let mut taken = vec![false; first_ana];
    let mut runs = Vec::new();
    let mut dropped = Vec::new();
    for (surface, confidence) in predictions {
        let needle: Vec<String> = word_tokens(surface, tokenizer).into_iter().map(|(t, _, _)| t).collect();
        let Some(s) = nearest_occurrence(&doc_tokens, &needle, first_ana) else {
            dropped.push((surface.clone(), DropReason::Unaligned));
            continue;
        };
        let e = s + needle.len();
        if taken[s..e].iter().any(|&t| t) {
            dropped.push((surface.clone(), DropReason::Overlap));
            continue;
        }
        taken[s..e].iter_mut().for_each(|t| *t = true);
        runs.push((s, e, surface.clone(), *confidence));
    }
    runs.sort_by_key(|r| r.0);

    let mut tokens = Vec::with_capacity(doc_tokens.len() + 2);
    let mut tags = Vec::with_capacity(doc_tokens.len() + 2);
    for (i, t) in doc_tokens.iter().enumerate() {
        if i == first_ana {
            tokens.push(ANA_START.to_string());
            tags.push(Tag::O);
        }
        if i == after_ana {
            tokens.push(ANA_END.to_string());
            tags.push(Tag::O);
        }
        tokens.push(t.clone());
        tags.push(Tag::O);
    }
    if first_ana == doc_tokens.len() {
        tokens.push(ANA_START.to_string());
        tags.push(Tag::O);
    }
    if after_ana == doc_tokens.len() {
        tokens.push(ANA_END.to_string());
        tags.push(Tag::O);
    }
    // Runs lie before the anaphor, so their indices are unshifted.
    let labeled = runs
        .into_iter()
        .map(|(s, e, surface, confidence)| {
            tags[s] = Tag::B;
            for t in &mut tags[s + 1..e] {
                *t = Tag::I;
            }
            LabeledRun {
                start: s,
                end: e,
                surface,
                confidence,
            }
        })
        .collect();
    (
        PseudoLabeledRecord {
            doc_id: doc_id.to_string(),
            anaphor: anaphor.clone(),
            tokens,
            tags,
            runs: labeled,
        },
        dropped,
    )
}

/// Detected anaphors of every document, as unlabeled examples in document
/// order.
pub fn detect_examples(docs: &[UnlabeledDoc], rules: &RuleSet) -> Vec<Example> {
    docs.iter()
        .flat_map(|d| {
            detect_anaphors(&d.text, rules).into_iter().map(|span| Example {
                doc_id: d.doc_id.clone(),
                text: d.text.clone(),
                anaphor: span,
                gold_antecedents: None,
            })
        })
        .collect()
}

fn record_from_entry(ex: &Example, entry: &ManifestEntry, tokenizer: &dyn Tokenizer) -> (PseudoLabeledRecord, Vec<DroppedSurface>) {
    let predictions: Vec<(String, f64)> = entry
        .final_set
        .iter()
        .map(|s| {
            let conf = entry
                .candidates
                .iter()
                .find(|c| &c.canonical_surface == s)
                .map_or(0.0, |c| c.combined_prob);
            (s.clone(), conf)
        })
        .collect();
    let (record, dropped) = build_record(&ex.doc_id, &ex.text, &ex.anaphor, &predictions, tokenizer);
    let dropped = dropped
        .into_iter()
        .map(|(surface, reason)| {
            log::info!("{}: dropping {surface:?} ({reason:?})", entry.test_key);
            DroppedSurface {
                key: entry.test_key.clone(),
                surface,
                reason,
            }
        })
        .collect();
    (record, dropped)
}

/// Pseudo-labels `m` detected anaphors chosen with `seed` (uniformly,
/// without replacement) and returned in document order.
///
/// Inputs whose resolution fails for a non-backend reason are skipped and
/// listed in the manifest. A backend failure stops the run; the error
/// carries the records completed before the failing input.
pub fn generate_pseudo_labels(
    docs: &[UnlabeledDoc],
    resolver: &Resolver,
    config: &RunConfig,
    sample: &KShotSample,
    rules: &RuleSet,
    m: usize,
    seed: u64,
) -> Result<(Vec<PseudoLabeledRecord>, DistillManifest), DistillError> {
    let detected = detect_examples(docs, rules);
    if m > detected.len() {
        return Err(DistillError::NotEnoughAnaphors {
            requested: m,
            available: detected.len(),
        });
    }
    let mut idx: Vec<usize> = (0..detected.len()).collect();
    let mut rng = SplitMix64::new(seed);
    for i in 0..m {
        let j = i + rng.below((idx.len() - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    let chosen: Vec<Example> = idx.iter().map(|&i| detected[i].clone()).collect();

    let entries = resolver.resolve_examples(config, &chosen, sample)?;
    let tokenizer = resolver.tokenizer().as_ref();
    let mut records = Vec::new();
    let mut manifest = DistillManifest {
        detected: detected.len(),
        requested: m,
        exported: 0,
        dropped_surfaces: Vec::new(),
        skipped_examples: Vec::new(),
    };
    for (ex, entry) in chosen.iter().zip(&entries) {
        if let Some(err) = &entry.error {
            if entry.is_backend_failure() {
                return Err(DistillError::Backend {
                    failed_key: entry.test_key.clone(),
                    message: err.message.clone(),
                    completed: records,
                });
            }
            manifest.skipped_examples.push(SkippedExample {
                key: entry.test_key.clone(),
                reason: format!("{}: {}", err.kind, err.message),
            });
            continue;
        }
        let (record, dropped) = record_from_entry(ex, entry, tokenizer);
        manifest.dropped_surfaces.extend(dropped);
        records.push(record);
    }
    manifest.exported = records.len();
    Ok((records, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Jsonl,
    Conll,
}

/// Writes records ordered by document id and anaphor offset. CONLL output
/// holds one `token<TAB>tag` line per token with a blank line between
/// records.
pub fn export_records<W: Write>(
    records: &[PseudoLabeledRecord],
    mut out: W,
    format: ExportFormat,
) -> Result<(), DistillError> {
    let mut ordered: Vec<&PseudoLabeledRecord> = records.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.doc_id, a.anaphor.start, a.anaphor.end).cmp(&(&b.doc_id, b.anaphor.start, b.anaphor.end))
    });
    for (i, r) in ordered.iter().enumerate() {
        r.validate()
            .map_err(|e| DistillError::InvalidRecord(format!("{}:{}-{}", r.doc_id, r.anaphor.start, r.anaphor.end), e))?;
        match format {
            ExportFormat::Jsonl => {
                writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
            }
            ExportFormat::Conll => {
                if i > 0 {
                    writeln!(out)?;
                }
                for (t, tag) in r.tokens.iter().zip(&r.tags) {
                    writeln!(out, "{t}\t{tag}")?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn export_to_path(
    records: &[PseudoLabeledRecord],
    path: impl AsRef<Path>,
    format: ExportFormat,
) -> Result<(), DistillError> {
    let file = std::fs::File::create(path)?;
    export_records(records, std::io::BufWriter::new(file), format)
}

/// Reads records written in the JSONL format.
pub fn load_records<R: BufRead>(reader: R) -> Result<Vec<PseudoLabeledRecord>, DistillError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DistillError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::WordPunctTokenizer;

    fn span_of(text: &str, s: &str) -> Span {
        let b = text.rfind(s).unwrap();
        let start = text[..b].chars().count();
        Span::new(text, start, start + s.chars().count()).unwrap()
    }

    fn tagged(r: &PseudoLabeledRecord) -> Vec<String> {
        r.tokens.iter().zip(&r.tags).map(|(t, g)| format!("{t}/{g}")).collect()
    }

    #[test]
    fn single_token_alignment() {
        let text = "Add water. The mixture was stirred.";
        let (r, dropped) = build_record("d", text, &span_of(text, "The mixture"), &[("water".into(), 0.9)], &WordPunctTokenizer);
        assert!(dropped.is_empty());
        assert_eq!(
            tagged(&r),
            [
                "Add/O", "water/B", "./O", "[Ana-start]/O", "The/O", "mixture/O", "[Ana-end]/O", "was/O", "stirred/O",
                "./O"
            ]
        );
        r.validate().unwrap();
    }

    #[test]
    fn multi_token_run_and_nearest_occurrence() {
        let text = "compound 54 then water and compound 54. The mixture";
        let (r, _) = build_record("d", text, &span_of(text, "The mixture"), &[("compound 54".into(), 0.5)], &WordPunctTokenizer);
        assert_eq!(r.runs.len(), 1);
        assert_eq!((r.runs[0].start, r.runs[0].end), (5, 7));
        assert_eq!(&r.tags[5..7], &[Tag::B, Tag::I]);
        assert_eq!(r.tags[0], Tag::O);
    }

    #[test]
    fn unaligned_and_overlapping_surfaces_are_dropped() {
        let text = "Add water (5 mL). The mixture";
        let preds = [("water (5 mL)".to_string(), 0.9), ("water".to_string(), 0.5), ("salt".to_string(), 0.4)];
        let (r, dropped) = build_record("d", text, &span_of(text, "The mixture"), &preds, &WordPunctTokenizer);
        assert_eq!(r.runs.len(), 1);
        assert_eq!(dropped, vec![("water".into(), DropReason::Overlap), ("salt".into(), DropReason::Unaligned)]);
    }

    #[test]
    fn anaphor_at_document_end() {
        let text = "Add water. the mixture";
        let (r, _) = build_record("d", text, &span_of(text, "the mixture"), &[], &WordPunctTokenizer);
        assert_eq!(r.tokens.last().unwrap(), ANA_END);
        r.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_bio() {
        let text = "Add water. The mixture";
        let (mut r, _) = build_record("d", text, &span_of(text, "The mixture"), &[], &WordPunctTokenizer);
        r.tags[1] = Tag::I;
        assert!(r.validate().is_err());
    }

    #[test]
    fn empty_export_is_empty() {
        for f in [ExportFormat::Jsonl, ExportFormat::Conll] {
            let mut buf = Vec::new();
            export_records(&[], &mut buf, f).unwrap();
            assert!(buf.is_empty());
        }
    }
}
