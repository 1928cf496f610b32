//! Anaphora-annotated documents: data model, JSONL ingestion and seeded
//! k-shot sampling.
//!
//! Offsets are character offsets counted in Unicode scalar values, end
//! exclusive. Each JSONL line holds one anaphor:
//!
//! ```json
//! {"doc_id": "d1", "text": "A and B. They react.", "anaphor": {"start": 9, "end": 13},
//!  "antecedents": [{"start": 0, "end": 1}, {"start": 6, "end": 7}]}
//! ```
//!
//! `antecedents` may be omitted for unlabeled data.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid span at line {line}")]
    InvalidSpan { line: usize },
    #[error("antecedent follows anaphor at line {line}")]
    AntecedentFollowsAnaphor { line: usize },
    #[error("duplicate antecedent at line {line}")]
    DuplicateAntecedent { line: usize },
    #[error("duplicate anaphor key {key} at line {line}")]
    DuplicateAnaphor { line: usize, key: String },
    #[error("cannot sample k={k} examples from a split of {available}")]
    SampleTooLarge { k: usize, available: usize },
}

/// Slices `text` by character offsets. Returns `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let from = indices.nth(start)?;
    let to = if end == start {
        from
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[from..to])
}

/// A character span of a document with its cached surface string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl Span {
    /// Builds a span over `text`, validating `0 <= start < end <= len`.
    pub fn new(text: &str, start: usize, end: usize) -> Option<Self> {
        if start >= end {
            return None;
        }
        char_slice(text, start, end).map(|s| Self {
            start,
            end,
            surface: s.to_string(),
        })
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Identifies one anaphor within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleKey {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for ExampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.doc_id, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub doc_id: String,
    pub text: String,
    pub anaphor: Span,
    /// Gold antecedents in document order; `None` for unlabeled data.
    pub gold_antecedents: Option<Vec<Span>>,
}

impl Example {
    pub fn key(&self) -> ExampleKey {
        ExampleKey {
            doc_id: self.doc_id.clone(),
            start: self.anaphor.start,
            end: self.anaphor.end,
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.gold_antecedents.is_some()
    }

    /// Builds and validates an example from raw offsets.
    pub fn from_offsets(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        anaphor: (usize, usize),
        antecedents: Option<&[(usize, usize)]>,
    ) -> Result<Self, CorpusError> {
        let raw = RawExample {
            doc_id: doc_id.into(),
            text: text.into(),
            anaphor: RawSpan {
                start: anaphor.0,
                end: anaphor.1,
            },
            antecedents: antecedents.map(|a| {
                a.iter()
                    .map(|&(start, end)| RawSpan { start, end })
                    .collect()
            }),
        };
        raw.validate(1)
    }

    fn to_raw(&self) -> RawExample {
        RawExample {
            doc_id: self.doc_id.clone(),
            text: self.text.clone(),
            anaphor: RawSpan {
                start: self.anaphor.start,
                end: self.anaphor.end,
            },
            antecedents: self.gold_antecedents.as_ref().map(|spans| {
                spans
                    .iter()
                    .map(|s| RawSpan {
                        start: s.start,
                        end: s.end,
                    })
                    .collect()
            }),
        }
    }

    /// Serializes to one line of the corpus JSONL format (no newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("corpus records always serialize")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpan {
    start: usize,
    end: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawExample {
    doc_id: String,
    text: String,
    anaphor: RawSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    antecedents: Option<Vec<RawSpan>>,
}

impl RawExample {
    fn validate(self, line: usize) -> Result<Example, CorpusError> {
        let anaphor = Span::new(&self.text, self.anaphor.start, self.anaphor.end)
            .ok_or(CorpusError::InvalidSpan { line })?;
        let gold_antecedents = match self.antecedents {
            None => None,
            Some(raw) => {
                let mut spans = Vec::with_capacity(raw.len());
                let mut seen = HashSet::new();
                for r in raw {
                    let span =
                        Span::new(&self.text, r.start, r.end).ok_or(CorpusError::InvalidSpan { line })?;
                    if span.end > anaphor.start {
                        return Err(CorpusError::AntecedentFollowsAnaphor { line });
                    }
                    if !seen.insert((span.start, span.end)) {
                        return Err(CorpusError::DuplicateAntecedent { line });
                    }
                    spans.push(span);
                }
                spans.sort_by_key(|s| (s.start, s.end));
                Some(spans)
            }
        };
        Ok(Example {
            doc_id: self.doc_id,
            text: self.text,
            anaphor,
            gold_antecedents,
        })
    }
}

/// An ordered split of examples with unique anaphor keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub split_name: String,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate anaphor keys.
    pub fn new(split_name: impl Into<String>, examples: Vec<Example>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, ex) in examples.iter().enumerate() {
            let key = ex.key();
            if !seen.insert(key.clone()) {
                return Err(CorpusError::DuplicateAnaphor {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self {
            split_name: split_name.into(),
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, key: &ExampleKey) -> Option<&Example> {
        self.examples.iter().find(|e| &e.key() == key)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for ex in &self.examples {
            writeln!(out, "{}", ex.to_json_line())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let file = File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Parses corpus JSONL from a reader. Blank lines are skipped but still
/// counted for error line numbers.
pub fn parse_corpus<R: BufRead>(reader: R, split_name: &str) -> Result<Dataset, CorpusError> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExample =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: line_no, source })?;
        let ex = raw.validate(line_no)?;
        let key = ex.key();
        if !seen.insert(key.clone()) {
            return Err(CorpusError::DuplicateAnaphor {
                line: line_no,
                key: key.to_string(),
            });
        }
        examples.push(ex);
    }
    Ok(Dataset {
        split_name: split_name.to_string(),
        examples,
    })
}

/// Loads a corpus JSONL file; the split name is the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file), &split)
}

/// `k` training examples drawn without replacement under a fixed seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KShotSample {
    pub k: usize,
    pub seed: u64,
    pub examples: Vec<Example>,
}

impl KShotSample {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Seeded uniform sample without replacement.
///
/// Partial Fisher-Yates over the index list `0..n`: for `i` in `0..k`, draw
/// `j = i + below(n - i)` from [`SplitMix64`] seeded with `seed`, swap
/// positions `i` and `j`. The first `k` indices, in that order, are the sample.
pub fn sample_kshot(dataset: &Dataset, k: usize, seed: u64) -> Result<KShotSample, CorpusError> {
    let n = dataset.len();
    if k > n {
        return Err(CorpusError::SampleTooLarge { k, available: n });
    }
    let mut rng = SplitMix64::new(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    let examples = idx[..k].iter().map(|&i| dataset.examples[i].clone()).collect();
    Ok(KShotSample { k, seed, examples })
}
