//! End-to-end resolution of a test split: embed, build prompts, query the
//! backend, combine, filter and score. Every run is recorded in a manifest
//! from which [`replay`] re-derives the final sets without a backend.
//!
//! Manifest files are JSONL. Each run starts with a header record followed
//! by one entry per test input:
//!
//! ```text
//! {"record":"header","schema_version":1,"split":"test","seed":1,"tokenizer":"word-punct","sample_keys":[...],"config":{...}}
//! {"record":"entry","test_key":"d1:40-51","gold":[...],"prompts":[...],"gating":{...},"predictions":[...],"candidates":[...],"final_set":[...],"requests":64,"error":null}
//! ```
//!
//! A multi-seed run writes one header-plus-entries group per seed.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combine::{
    combine_kate_plus, combine_mice, combine_mice_sample, combine_product, extract_prediction, sample_kate_plus,
    CandidateAntecedent, CombineError, CombinerKind, PromptPrediction,
};
use crate::corpus::{sample_kshot, CorpusError, Dataset, Example, ExampleKey, KShotSample};
use crate::filter::{filter_and_merge, FilterConfig};
use crate::lm::{CompletionRequest, DecodeMode, DecodeParams, LmBackend, LmError, Tokenizer};
use crate::metrics::{gold_map, micro_f1, MetricsError, ScoreReport};
use crate::prompt::{Prompt, PromptBuilder, PromptError, PromptSetConfig, Template};
use crate::similarity::{cosine, gate, EmbedError, Embedder, EmbeddingVector, GateCombine, GatingDistribution};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything that determines a run besides the data and the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    /// Drives the k-shot sample; the prompt and decode seeds are set
    /// separately so one can be varied without the other.
    pub seed: u64,
    pub prompt: PromptSetConfig,
    pub decode: DecodeParams,
    pub combiner: CombinerKind,
    pub filter: FilterConfig,
    pub gate_combine: GateCombine,
    pub product_epsilon: f64,
    pub kate_plus_samples: usize,
    pub template: Template,
}

impl RunConfig {
    /// The defaults each combiner is run with:
    ///
    /// | combiner      | prompts          | demos per prompt | decode  | thresholds  |
    /// |---------------|------------------|------------------|---------|-------------|
    /// | kate          | 1                | k (budget-bound) | greedy  | 0 / 0       |
    /// | kate-plus     | 1, 256 samples   | k (budget-bound) | nucleus | 0.02 / 0.1  |
    /// | product       | k                | 1                | greedy  | 0.02 / 0.1  |
    /// | mice, mice-s  | min(256, k^2)    | 2                | greedy  | 0.02 / 0.1  |
    ///
    /// `seed` is used for the sample, the prompt set and decoding.
    pub fn for_combiner(combiner: CombinerKind, k: usize, seed: u64) -> Self {
        let d = match combiner {
            CombinerKind::Kate | CombinerKind::KatePlus => k.max(1),
            CombinerKind::Product => 1,
            CombinerKind::Mice | CombinerKind::MiceS => 2,
        };
        let decode = match combiner {
            CombinerKind::KatePlus => DecodeParams::nucleus(seed),
            _ => DecodeParams {
                seed,
                ..DecodeParams::greedy()
            },
        };
        Self {
            k,
            seed,
            prompt: PromptSetConfig {
                d,
                seed,
                ..PromptSetConfig::default()
            },
            decode,
            combiner,
            filter: FilterConfig::for_combiner(combiner),
            gate_combine: GateCombine::Sum,
            product_epsilon: 1e-4,
            kate_plus_samples: 256,
            template: Template::default(),
        }
    }

    /// The same configuration with every seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.prompt.seed = seed;
        c.decode.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k < 1 {
            return Err(PipelineError::Config("k must be at least 1".into()));
        }
        self.prompt.validate()?;
        self.decode.validate()?;
        self.filter.validate().map_err(PipelineError::Config)?;
        if self.combiner == CombinerKind::KatePlus && self.decode.mode != DecodeMode::Nucleus {
            return Err(PipelineError::Config(
                "kate-plus requires nucleus decoding (--decode nucleus with --top-k/--top-p)".into(),
            ));
        }
        if self.combiner == CombinerKind::KatePlus && self.kate_plus_samples < 1 {
            return Err(PipelineError::Config("kate-plus needs at least one sample".into()));
        }
        if !(self.product_epsilon > 0.0 && self.product_epsilon <= 1.0) {
            return Err(PipelineError::Config(format!(
                "product epsilon must lie in (0, 1], got {}",
                self.product_epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: usize,
    pub demo_keys: Vec<String>,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryError {
    /// One of `budget`, `backend`, `prompt`, `embedding`, `combine`.
    pub kind: String,
    pub message: String,
}

/// The record of one test input: enough to recompute its final set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub test_key: String,
    pub gold: Option<Vec<String>>,
    pub prompts: Vec<PromptRecord>,
    pub gating: BTreeMap<usize, f64>,
    pub predictions: Vec<PromptPrediction>,
    pub candidates: Vec<CandidateAntecedent>,
    pub final_set: Vec<String>,
    pub requests: usize,
    pub error: Option<EntryError>,
}

impl ManifestEntry {
    fn failed(test: &Example, kind: &str, message: String, requests: usize) -> Self {
        Self {
            test_key: test.key().to_string(),
            gold: gold_surfaces(test),
            prompts: Vec::new(),
            gating: BTreeMap::new(),
            predictions: Vec::new(),
            candidates: Vec::new(),
            final_set: Vec::new(),
            requests,
            error: Some(EntryError {
                kind: kind.into(),
                message,
            }),
        }
    }

    pub fn is_backend_failure(&self) -> bool {
        self.error.as_ref().is_some_and(|e| e.kind == "backend")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub split: String,
    pub seed: u64,
    pub tokenizer: String,
    pub sample_keys: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ManifestRecord {
    Header(ManifestHeader),
    Entry(ManifestEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = ManifestRecord::Header(self.header.clone());
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for e in &self.entries {
            let rec = ManifestRecord::Entry(e.clone());
            writeln!(out, "{}", serde_json::to_string(&rec).expect("entry serializes"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("manifest is UTF-8")
    }

    pub fn predictions(&self) -> BTreeMap<String, Vec<String>> {
        self.entries
            .iter()
            .map(|e| (e.test_key.clone(), e.final_set.clone()))
            .collect()
    }

    pub fn gold(&self) -> BTreeMap<String, Vec<String>> {
        self.entries
            .iter()
            .map(|e| (e.test_key.clone(), e.gold.clone().unwrap_or_default()))
            .collect()
    }

    pub fn score(&self) -> Result<ScoreReport, MetricsError> {
        micro_f1(&self.predictions(), &self.gold())
    }
}

/// Writes several runs to one file, one header group each.
pub fn write_manifests(path: impl AsRef<Path>, runs: &[RunManifest]) -> Result<(), PipelineError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in runs {
        r.write_jsonl(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_manifests<R: BufRead>(reader: R) -> Result<Vec<RunManifest>, PipelineError> {
    let mut runs: Vec<RunManifest> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line).map_err(|message| PipelineError::Manifest { line: i + 1, message })?;
        match rec {
            ManifestRecord::Header(h) => {
                if h.schema_version != SCHEMA_VERSION {
                    return Err(PipelineError::Manifest {
                        line: i + 1,
                        message: format!("unsupported schema version {}", h.schema_version),
                    });
                }
                runs.push(RunManifest {
                    header: h,
                    entries: Vec::new(),
                });
            }
            ManifestRecord::Entry(e) => match runs.last_mut() {
                Some(r) => r.entries.push(e),
                None => {
                    return Err(PipelineError::Manifest {
                        line: i + 1,
                        message: "entry before any header".into(),
                    })
                }
            },
        }
    }
    Ok(runs)
}

/// One manifest line, dispatched on its `record` tag.
fn parse_record(line: &str) -> Result<ManifestRecord, String> {
    let mut v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let tag = v
        .as_object_mut()
        .and_then(|o| o.remove("record"))
        .ok_or("missing record tag")?;
    match tag.as_str() {
        Some("header") => serde_json::from_value(v).map(ManifestRecord::Header),
        Some("entry") => serde_json::from_value(v).map(ManifestRecord::Entry),
        _ => return Err(format!("unknown record tag {tag}")),
    }
    .map_err(|e| e.to_string())
}

pub fn read_manifests(path: impl AsRef<Path>) -> Result<Vec<RunManifest>, PipelineError> {
    parse_manifests(BufReader::new(std::fs::File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub k: usize,
    pub score: ScoreReport,
}

/// Scores over one or more seeds with their mean and sample standard
/// deviation (0 for a single seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub combiner: CombinerKind,
    pub runs: Vec<SeedRun>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

impl RunReport {
    pub fn new(combiner: CombinerKind, runs: Vec<SeedRun>) -> Self {
        let f1s: Vec<f64> = runs.iter().map(|r| r.score.f1).collect();
        let (mean_f1, std_f1) = mean_std(&f1s);
        Self {
            combiner,
            runs,
            mean_f1,
            std_f1,
        }
    }

    pub fn from_manifests(manifests: &[RunManifest]) -> Result<Self, PipelineError> {
        let combiner = manifests
            .first()
            .map(|m| m.header.config.combiner)
            .ok_or_else(|| PipelineError::Config("no runs in manifest".into()))?;
        let runs = manifests
            .iter()
            .map(|m| {
                Ok(SeedRun {
                    seed: m.header.seed,
                    k: m.header.config.k,
                    score: m.score()?,
                })
            })
            .collect::<Result<_, PipelineError>>()?;
        Ok(Self::new(combiner, runs))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            out.push_str(&format!("seed {} (k={})\n", r.seed, r.k));
            out.push_str(&r.score.to_table());
        }
        out.push_str(&format!(
            "{}: mean f1 {:.4}  std {:.4}  over {} seed(s)\n",
            self.combiner.as_str(),
            self.mean_f1,
            self.std_f1,
            self.runs.len()
        ));
        out
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn gold_surfaces(ex: &Example) -> Option<Vec<String>> {
    ex.gold_antecedents
        .as_ref()
        .map(|g| g.iter().map(|s| s.surface.clone()).collect())
}

/// Combination and filtering from recorded predictions and gating.
pub fn combine_and_filter(
    config: &RunConfig,
    predictions: &[PromptPrediction],
    gating: &GatingDistribution,
    tokenizer: &dyn Tokenizer,
) -> Result<(Vec<CandidateAntecedent>, Vec<String>), CombineError> {
    let candidates = match config.combiner {
        CombinerKind::Mice => combine_mice(predictions, gating, tokenizer)?,
        CombinerKind::MiceS | CombinerKind::Kate => combine_mice_sample(predictions, gating, tokenizer)?,
        CombinerKind::Product => combine_product(predictions, config.product_epsilon, tokenizer)?,
        CombinerKind::KatePlus => combine_kate_plus(predictions, tokenizer)?,
    };
    let kept = filter_and_merge(&candidates, &config.filter, tokenizer);
    Ok((candidates, kept.into_iter().map(|c| c.canonical_surface).collect()))
}

/// Counts calls made through it.
struct Counted<'a> {
    inner: &'a dyn LmBackend,
    calls: AtomicUsize,
}

impl LmBackend for Counted<'_> {
    fn complete(&self, request: &CompletionRequest) -> Result<crate::lm::Generation, LmError> {
        self.calls.fetch_add(1, AtomicOrdering::Relaxed);
        self.inner.complete(request)
    }
}

/// Runs configurations against one tokenizer, embedder and backend. All
/// fan-out (across test inputs and across prompts) shares one thread pool
/// of `parallelism` workers; results are collected in input order, so the
/// order in which completions arrive never matters.
pub struct Resolver {
    tokenizer: Arc<dyn Tokenizer>,
    embedder: Arc<dyn Embedder>,
    backend: Arc<dyn LmBackend>,
    pool: rayon::ThreadPool,
    requests: AtomicUsize,
}

impl Resolver {
    pub fn new(
        tokenizer: Arc<dyn Tokenizer>,
        embedder: Arc<dyn Embedder>,
        backend: Arc<dyn LmBackend>,
        parallelism: usize,
    ) -> Result<Self, PipelineError> {
        if parallelism < 1 {
            return Err(PipelineError::Config("parallelism must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self {
            tokenizer,
            embedder,
            backend,
            pool,
            requests: AtomicUsize::new(0),
        })
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    /// Backend requests issued so far.
    pub fn requests(&self) -> usize {
        self.requests.load(AtomicOrdering::Relaxed)
    }

    fn builder(&self, config: &RunConfig) -> PromptBuilder {
        PromptBuilder::new(config.template.clone(), self.tokenizer.clone(), config.prompt.clone())
    }

    /// Embeddings of the demonstrations' answer-free renderings.
    pub fn embed_sample(
        &self,
        config: &RunConfig,
        sample: &KShotSample,
    ) -> Result<HashMap<ExampleKey, EmbeddingVector>, PipelineError> {
        let builder = self.builder(config);
        let texts: Vec<String> = sample.examples.iter().map(|e| builder.query_text(e)).collect();
        let vecs = self.embedder.embed_batch(&texts)?;
        Ok(sample.examples.iter().map(Example::key).zip(vecs).collect())
    }

    /// Resolves one test input. Failures are recorded in the entry rather
    /// than returned.
    pub fn resolve_one(
        &self,
        config: &RunConfig,
        test: &Example,
        sample: &KShotSample,
        demo_embeddings: &HashMap<ExampleKey, EmbeddingVector>,
    ) -> ManifestEntry {
        let counted = Counted {
            inner: self.backend.as_ref(),
            calls: AtomicUsize::new(0),
        };
        let entry = match self.try_resolve(config, test, sample, demo_embeddings, &counted) {
            Ok(e) => e,
            Err((kind, message)) => {
                log::warn!("{}: {kind} failure: {message}", test.key());
                ManifestEntry::failed(test, kind, message, 0)
            }
        };
        let calls = counted.calls.load(AtomicOrdering::Relaxed);
        self.requests.fetch_add(calls, AtomicOrdering::Relaxed);
        ManifestEntry {
            requests: calls,
            ..entry
        }
    }

    fn try_resolve(
        &self,
        config: &RunConfig,
        test: &Example,
        sample: &KShotSample,
        demo_embeddings: &HashMap<ExampleKey, EmbeddingVector>,
        backend: &Counted<'_>,
    ) -> Result<ManifestEntry, (&'static str, String)> {
        let builder = self.builder(config);
        let embed_err = |e: EmbedError| ("embedding", e.to_string());
        let test_emb = self.embedder.embed(&builder.query_text(test)).map_err(embed_err)?;
        let sims: Vec<f64> = sample
            .examples
            .iter()
            .map(|d| {
                let v = demo_embeddings
                    .get(&d.key())
                    .ok_or_else(|| EmbedError::MissingEmbedding(d.key()))?;
                cosine(&test_emb, v)
            })
            .collect::<Result<_, _>>()
            .map_err(embed_err)?;

        let prompt_err = |e: PromptError| match e {
            PromptError::Unsatisfiable { .. } => ("budget", e.to_string()),
            other => ("prompt", other.to_string()),
        };
        let prompts: Vec<Prompt> = match config.combiner {
            CombinerKind::Kate | CombinerKind::KatePlus => {
                vec![builder.knn_prompt(sample, test, &sims).map_err(prompt_err)?]
            }
            _ => builder.enumerate_prompts(sample, test, &sims).map_err(prompt_err)?,
        };

        let backend_err = |e: CombineError| match e {
            CombineError::Lm(lm) => ("backend", lm.to_string()),
            other => ("combine", other.to_string()),
        };
        let (predictions, gating) = match config.combiner {
            CombinerKind::KatePlus => {
                let preds = self
                    .pool
                    .install(|| {
                        sample_kate_plus(backend, &prompts[0], config.kate_plus_samples, &config.decode, &config.template)
                    })
                    .map_err(backend_err)?;
                let g = GatingDistribution::uniform(preds.iter().map(|p| p.prompt_id));
                (preds, g)
            }
            _ => {
                let preds = self
                    .pool
                    .install(|| {
                        prompts
                            .par_iter()
                            .map(|p| {
                                let req = CompletionRequest {
                                    prompt_id: p.prompt_id,
                                    prompt: p.rendered.clone(),
                                    params: config.decode.clone(),
                                    meta: Some(p.meta()),
                                };
                                backend
                                    .complete(&req)
                                    .map(|g| extract_prediction(p.prompt_id, &g, &config.template))
                            })
                            .collect::<Result<Vec<_>, LmError>>()
                    })
                    .map_err(|e| ("backend", e.to_string()))?;
                let g = match config.combiner {
                    CombinerKind::Mice | CombinerKind::MiceS | CombinerKind::Product => {
                        gate(&test_emb, &prompts, demo_embeddings, config.gate_combine).map_err(embed_err)?
                    }
                    _ => GatingDistribution::uniform(prompts.iter().map(|p| p.prompt_id)),
                };
                (preds, g)
            }
        };

        let (candidates, final_set) =
            combine_and_filter(config, &predictions, &gating, self.tokenizer.as_ref()).map_err(backend_err)?;
        Ok(ManifestEntry {
            test_key: test.key().to_string(),
            gold: gold_surfaces(test),
            prompts: prompts
                .iter()
                .map(|p| PromptRecord {
                    prompt_id: p.prompt_id,
                    demo_keys: p.demonstrations.iter().map(|d| d.key().to_string()).collect(),
                    token_count: p.token_count,
                })
                .collect(),
            gating: gating.weights,
            predictions,
            candidates,
            final_set,
            requests: 0,
            error: None,
        })
    }

    /// One entry per example, in input order.
    pub fn resolve_examples(
        &self,
        config: &RunConfig,
        examples: &[Example],
        sample: &KShotSample,
    ) -> Result<Vec<ManifestEntry>, PipelineError> {
        config.validate()?;
        config.template.validate_sample(&sample.examples)?;
        let demo_embeddings = self.embed_sample(config, sample)?;
        Ok(self.pool.install(|| {
            examples
                .par_iter()
                .map(|t| self.resolve_one(config, t, sample, &demo_embeddings))
                .collect()
        }))
    }

    pub fn resolve_split(
        &self,
        config: &RunConfig,
        test: &Dataset,
        sample: &KShotSample,
    ) -> Result<(ScoreReport, RunManifest), PipelineError> {
        let entries = self.resolve_examples(config, &test.examples, sample)?;
        let manifest = RunManifest {
            header: ManifestHeader {
                schema_version: SCHEMA_VERSION,
                split: test.split_name.clone(),
                seed: config.seed,
                tokenizer: self.tokenizer.name().to_string(),
                sample_keys: sample.examples.iter().map(|e| e.key().to_string()).collect(),
                config: config.clone(),
            },
            entries,
        };
        let predictions = manifest.predictions();
        let score = micro_f1(&predictions, &gold_map(&test.examples))?;
        Ok((score, manifest))
    }

    /// Runs `config` once per seed, drawing a fresh k-shot sample from
    /// `train` each time.
    pub fn run_seeds(
        &self,
        config: &RunConfig,
        train: &Dataset,
        test: &Dataset,
        seeds: &[u64],
    ) -> Result<(RunReport, Vec<RunManifest>), PipelineError> {
        if seeds.is_empty() {
            return Err(PipelineError::Config("at least one seed is required".into()));
        }
        let mut runs = Vec::new();
        let mut manifests = Vec::new();
        for &seed in seeds {
            let cfg = config.with_seed(seed);
            let sample = sample_kshot(train, cfg.k, seed)?;
            let (score, manifest) = self.resolve_split(&cfg, test, &sample)?;
            log::info!("seed {seed}: f1 {:.4}", score.f1);
            runs.push(SeedRun { seed, k: cfg.k, score });
            manifests.push(manifest);
        }
        Ok((RunReport::new(config.combiner, runs), manifests))
    }
}

/// Recomputes every entry's candidates and final set from its recorded
/// predictions and gating. No backend is involved.
pub fn replay(manifest: &RunManifest, tokenizer: &dyn Tokenizer) -> Result<RunManifest, PipelineError> {
    if manifest.header.tokenizer != tokenizer.name() {
        return Err(PipelineError::Config(format!(
            "manifest was produced with tokenizer {:?}, replay uses {:?}",
            manifest.header.tokenizer,
            tokenizer.name()
        )));
    }
    let config = &manifest.header.config;
    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            if e.error.is_some() {
                return Ok(e.clone());
            }
            let gating = GatingDistribution {
                weights: e.gating.clone(),
            };
            let (candidates, final_set) = combine_and_filter(config, &e.predictions, &gating, tokenizer)
                .map_err(|err| PipelineError::Config(format!("{}: {err}", e.test_key)))?;
            Ok(ManifestEntry {
                candidates,
                final_set,
                ..e.clone()
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(RunManifest {
        header: manifest.header.clone(),
        entries,
    })
}
