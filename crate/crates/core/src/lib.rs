//! Mixtures of in-context experts for split-antecedent anaphora resolution.
//!
//! A handful of labeled examples is expanded into many prompts, each an
//! in-context expert. Every prompt is sent to a completion backend, and the
//! per-prompt answers are combined with a similarity-gated mixture
//! ([`combine::combine_mice`]) or its sampling approximation
//! ([`combine::combine_mice_sample`]), then filtered and scored.
//!
//! ```no_run
//! use std::sync::Arc;
//! use mice::prelude::*;
//!
//! let train = load_corpus("train.jsonl")?;
//! let test = load_corpus("test.jsonl")?;
//! let tokenizer: Arc<dyn Tokenizer> = Arc::new(WordPunctTokenizer);
//! let backend = Arc::new(ScriptedBackend::oracle_echo(&test, tokenizer.clone(), Template::default()));
//! let resolver = Resolver::new(tokenizer, Arc::new(HashingEmbedder::default()), backend, 4)?;
//! let config = RunConfig::for_combiner(CombinerKind::MiceS, 8, 1);
//! let sample = sample_kshot(&train, config.k, config.seed)?;
//! let (score, _manifest) = resolver.resolve_split(&config, &test, &sample)?;
//! println!("{}", score.to_table());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod anaphor;
pub mod cli;
pub mod combine;
pub mod corpus;
pub mod distill;
pub mod filter;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod rng;
pub mod similarity;
pub mod synthetic;

pub mod prelude {
    pub use crate::anaphor::{detect_anaphors, evaluate_detection, RuleSet};
    pub use crate::combine::{CandidateAntecedent, CombinerKind, PromptPrediction};
    pub use crate::corpus::{load_corpus, sample_kshot, Dataset, Example, ExampleKey, KShotSample, Span};
    pub use crate::filter::{filter_and_merge, FilterConfig};
    pub use crate::lm::{
        DecodeMode, DecodeParams, Generation, HttpBackend, HttpBackendConfig, LmBackend, NoisyOracle,
        NoisyOracleConfig, ScriptedBackend, Tokenizer, WordPunctTokenizer,
    };
    pub use crate::metrics::{micro_f1, ScoreReport};
    pub use crate::pipeline::{replay, Resolver, RunConfig, RunManifest, RunReport};
    pub use crate::prompt::{Ordering, PromptBuilder, PromptSetConfig, Selection, Template};
    pub use crate::similarity::{Embedder, GateCombine, GatingDistribution, HashingEmbedder};
}
