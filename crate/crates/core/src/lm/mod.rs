//! Language-model gateway: decode parameters, generations with per-position
//! top-token probabilities, and the backends that produce them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExampleKey;

pub mod http;
pub mod mock;
pub mod sampling;
pub mod tokenizer;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{DistractorSource, NoisyOracle, NoisyOracleConfig, ScriptedBackend};
pub use sampling::{nucleus_set, sample_nucleus};
pub use tokenizer::{count_tokens, Tokenizer, VocabTokenizer, WordPunctTokenizer};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("backend rejected request (status {status}) after {attempts} attempt(s): {body}")]
    Http { status: u16, attempts: u32, body: String },
    #[error("prompt exceeds backend context: {message}")]
    ContextOverflow { message: String },
    #[error("malformed backend response after {attempts} attempt(s): {message}")]
    Malformed { attempts: u32, message: String },
    #[error("invalid decode parameters: {0}")]
    InvalidParams(String),
    #[error("mock fixture error: {0}")]
    Fixture(String),
}

impl LmError {
    /// Attempts made before the error surfaced.
    pub fn attempts(&self) -> u32 {
        match self {
            LmError::Unreachable { attempts, .. }
            | LmError::Http { attempts, .. }
            | LmError::Malformed { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Nucleus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub max_tokens: usize,
    pub top_k: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub logprob_depth: usize,
    pub seed: u64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self::greedy()
    }
}

impl DecodeParams {
    /// Greedy decoding up to 256 tokens, stopping at the end of the answer line.
    pub fn greedy() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            max_tokens: 256,
            top_k: 50,
            top_p: 0.95,
            temperature: 0.0,
            stop_sequences: vec!["\n".to_string()],
            logprob_depth: 20,
            seed: 0,
        }
    }

    /// Nucleus sampling with top-k 50 and top-p 0.95 at temperature 1.
    pub fn nucleus(seed: u64) -> Self {
        Self {
            mode: DecodeMode::Nucleus,
            temperature: 1.0,
            seed,
            ..Self::greedy()
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        match self.mode {
            DecodeMode::Greedy if self.temperature != 0.0 => {
                Err(LmError::InvalidParams("greedy decoding requires temperature 0".into()))
            }
            DecodeMode::Nucleus if !(self.top_p > 0.0 && self.top_p <= 1.0) => {
                Err(LmError::InvalidParams(format!("top_p must lie in (0, 1], got {}", self.top_p)))
            }
            DecodeMode::Nucleus if self.top_k < 1 => Err(LmError::InvalidParams("top_k must be at least 1".into())),
            DecodeMode::Nucleus if !(self.temperature > 0.0 && self.temperature.is_finite()) => Err(
                LmError::InvalidParams("nucleus sampling requires a positive temperature".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Which labeled examples a prompt was built from. Remote backends ignore
/// it; fixture-driven mocks match on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub demo_keys: Vec<ExampleKey>,
    pub test_key: ExampleKey,
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub prompt_id: usize,
    pub prompt: String,
    pub params: DecodeParams,
    pub meta: Option<PromptMeta>,
}

/// One completion: text, its tokens, and the top-token distribution at every
/// generated position. Tokens concatenate to `text` for the bundled
/// tokenizers; remote servers may use byte-level conventions, in which case
/// downstream slot alignment reports degradation instead of failing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub tokens: Vec<String>,
    pub top_probs: Vec<BTreeMap<String, f64>>,
}

impl Generation {
    pub fn empty() -> Self {
        Self {
            text: String::new(),
            tokens: Vec::new(),
            top_probs: Vec::new(),
        }
    }

    /// Checks per-position probabilities lie in (0, 1] and sum to at most 1.
    pub fn check(&self) -> Result<(), String> {
        if self.tokens.len() != self.top_probs.len() {
            return Err(format!(
                "{} tokens but {} probability maps",
                self.tokens.len(),
                self.top_probs.len()
            ));
        }
        for (pos, dist) in self.top_probs.iter().enumerate() {
            let mut mass = 0.0;
            for (tok, &p) in dist {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(format!("probability {p} for {tok:?} at position {pos} outside (0, 1]"));
                }
                mass += p;
            }
            if mass > 1.0 + 1e-9 {
                return Err(format!("probability mass {mass} at position {pos} exceeds 1"));
            }
        }
        Ok(())
    }
}

/// Keeps the `depth` most probable entries (ties broken by token).
pub fn truncate_top(dist: &BTreeMap<String, f64>, depth: usize) -> BTreeMap<String, f64> {
    if dist.len() <= depth {
        return dist.clone();
    }
    let mut entries: Vec<(&String, &f64)> = dist.iter().collect();
    entries.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    entries.into_iter().take(depth).map(|(k, v)| (k.clone(), *v)).collect()
}

/// A completion backend. Implementations must be safe to call concurrently.
pub trait LmBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Generation, LmError>;
}

impl<B: LmBackend + ?Sized> LmBackend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Generation, LmError> {
        (**self).complete(request)
    }
}

impl<B: LmBackend + ?Sized> LmBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Generation, LmError> {
        (**self).complete(request)
    }
}
