//! Pluggable tokenizers used for budget arithmetic and first-token lookup.
//!
//! Every tokenizer here is lossless: its pieces concatenate back to the input.

use std::collections::HashSet;
use std::path::Path;

pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    /// Splits `text` into pieces whose concatenation is `text`.
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Token count of `text` under `tokenizer`.
pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> usize {
    tokenizer.count(text)
}

/// Character offsets `[start, end)` of each piece.
pub fn piece_offsets(pieces: &[String]) -> Vec<(usize, usize)> {
    let mut at = 0;
    pieces
        .iter()
        .map(|p| {
            let n = p.chars().count();
            let span = (at, at + n);
            at += n;
            span
        })
        .collect()
}

/// The default whitespace-and-punctuation splitter.
///
/// Rules, applied left to right:
/// 1. A maximal run of alphanumeric characters is a word.
/// 2. Every other non-whitespace character is a token on its own.
/// 3. A whitespace run is one token, except that when it ends in a plain
///    space (U+0020) directly followed by a word, that last space is glued
///    to the front of the word and the remainder (if any) stays a token.
///
/// So `"water | DCM"` becomes `["water", " ", "|", " DCM"]`.
#[derive(Debug, Default, Clone, Copy)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn name(&self) -> &str {
        "word-punct"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_alphanumeric() {
                let j = run_end(&chars, i, |c| c.is_alphanumeric());
                out.push(chars[i..j].iter().collect());
                i = j;
            } else if c.is_whitespace() {
                let j = run_end(&chars, i, char::is_whitespace);
                let glue = chars[j - 1] == ' ' && chars.get(j).is_some_and(|c| c.is_alphanumeric());
                if glue {
                    if j - 1 > i {
                        out.push(chars[i..j - 1].iter().collect());
                    }
                    let k = run_end(&chars, j, |c| c.is_alphanumeric());
                    out.push(chars[j - 1..k].iter().collect());
                    i = k;
                } else {
                    out.push(chars[i..j].iter().collect());
                    i = j;
                }
            } else {
                out.push(c.to_string());
                i += 1;
            }
        }
        out
    }
}

fn run_end(chars: &[char], from: usize, pred: impl Fn(char) -> bool) -> usize {
    let mut j = from;
    while j < chars.len() && pred(chars[j]) {
        j += 1;
    }
    j
}

/// Greedy longest-match tokenizer over a vocabulary file (one piece per
/// line; `\s` in a line stands for a leading space). Characters not covered
/// by any vocabulary piece become single-character tokens.
#[derive(Debug, Clone)]
pub struct VocabTokenizer {
    vocab: HashSet<String>,
    max_piece_chars: usize,
}

impl VocabTokenizer {
    pub fn from_pieces<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: HashSet<String> = pieces.into_iter().map(Into::into).filter(|p| !p.is_empty()).collect();
        let max_piece_chars = vocab.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        Self { vocab, max_piece_chars }
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_pieces(
            text.lines().filter(|l| !l.is_empty()).map(|l| l.replace("\\s", " ")),
        ))
    }
}

impl Tokenizer for VocabTokenizer {
    fn name(&self) -> &str {
        "vocab"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let longest = (1..=self.max_piece_chars.min(chars.len() - i))
                .rev()
                .find(|&n| self.vocab.contains(&chars[i..i + n].iter().collect::<String>()))
                .unwrap_or(1);
            out.push(chars[i..i + longest].iter().collect());
            i += longest;
        }
        out
    }
}
