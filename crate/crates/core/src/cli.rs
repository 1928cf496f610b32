//! The `mice` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 backend
//! failure. Diagnostics go to standard error; reports and other machine
//! output go to files or standard output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::anaphor::{detect_anaphors, evaluate_detection, DetectionReport, RuleSet};
use crate::combine::CombinerKind;
use crate::corpus::{load_corpus, sample_kshot, Dataset, Span};
use crate::distill::{export_to_path, generate_pseudo_labels, load_unlabeled, DistillError, ExportFormat};
use crate::lm::mock::{MockFixture, MockMode};
use crate::lm::{DecodeMode, HttpBackend, HttpBackendConfig, LmBackend, NoisyOracle, ScriptedBackend, Tokenizer, WordPunctTokenizer};
use crate::metrics::micro_f1;
use crate::pipeline::{read_manifests, replay, write_manifests, PipelineError, Resolver, RunConfig, RunReport};
use crate::prompt::{Ordering, Selection, Template};
use crate::similarity::{Embedder, GateCombine, HashingEmbedder, RemoteEmbedder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mice", version, about = "Split-antecedent anaphora resolution with mixtures of in-context experts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find anaphors with the rule set; scores them when the input carries gold anaphors.
    Detect(DetectArgs),
    /// Draw a seeded k-shot sample from a labeled corpus.
    Sample(SampleArgs),
    /// Resolve a test corpus and score it.
    Resolve(ResolveArgs),
    /// Score a predictions file against a gold corpus.
    Eval(EvalArgs),
    /// Pseudo-label unlabeled protocols and export BIO-tagged records.
    Distill(DistillArgs),
    /// Recompute a report from a run manifest without querying any backend.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// JSONL of {"doc_id", "text"} with optional gold "anaphors": [{"start", "end"}]
    #[arg(long)]
    pub input: PathBuf,
    /// Rule file, one pattern per line [default: bundled rules]
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub case_sensitive: bool,
    /// Detections JSONL [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Detection P/R/F1 as JSON (requires gold anaphors in the input)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampled examples as corpus JSONL [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CombinerArg {
    Mice,
    MiceS,
    Product,
    Kate,
    KatePlus,
}

impl From<CombinerArg> for CombinerKind {
    fn from(c: CombinerArg) -> Self {
        match c {
            CombinerArg::Mice => CombinerKind::Mice,
            CombinerArg::MiceS => CombinerKind::MiceS,
            CombinerArg::Product => CombinerKind::Product,
            CombinerArg::Kate => CombinerKind::Kate,
            CombinerArg::KatePlus => CombinerKind::KatePlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Ascend,
    Descend,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    TopGated,
    SeededRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeArg {
    Greedy,
    Nucleus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    Sum,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Conll,
}

/// Options shared by every command that runs the resolver.
#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Labeled corpus the k-shot demonstrations are drawn from
    #[arg(long)]
    pub train: PathBuf,
    /// Demonstration pool size
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds; reports mean and standard deviation of F1
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, default_value = "mice-s")]
    pub combiner: CombinerArg,

    /// Demonstrations per prompt [default: 2 for mice/mice-s, 1 for product, k for kate/kate-plus]
    #[arg(long)]
    pub demos_per_prompt: Option<usize>,
    /// Prompts per test input
    #[arg(long, default_value_t = 256)]
    pub max_prompts: usize,
    #[arg(long, value_enum, default_value = "ascend")]
    pub ordering: OrderingArg,
    #[arg(long, value_enum, default_value = "top-gated")]
    pub selection: SelectionArg,
    #[arg(long, default_value_t = 2048)]
    pub max_seq_len: usize,
    /// Tokens reserved for generation
    #[arg(long, default_value_t = 256)]
    pub gen_reserve: usize,
    /// JSON template overriding question_pattern / answer_prefix / separator
    #[arg(long)]
    pub template: Option<PathBuf>,

    /// Completion endpoint
    #[arg(long, env = "MICE_LM_ENDPOINT", conflicts_with = "lm_mock")]
    pub lm_endpoint: Option<String>,
    /// Mock backend fixture (JSON)
    #[arg(long)]
    pub lm_mock: Option<PathBuf>,
    /// Concurrent requests and worker threads
    #[arg(long, default_value_t = 8)]
    pub parallelism: usize,
    /// Embedding endpoint [default: local hashing embedder]
    #[arg(long, env = "MICE_EMBED_ENDPOINT")]
    pub embed_endpoint: Option<String>,
    #[arg(long, value_enum, default_value = "sum")]
    pub gate_combine: GateArg,

    /// Decoding mode [default: nucleus for kate-plus, greedy otherwise]
    #[arg(long, value_enum)]
    pub decode: Option<DecodeArg>,
    #[arg(long, default_value_t = 50)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.95)]
    pub top_p: f64,
    /// Samples drawn by kate-plus
    #[arg(long, default_value_t = 256)]
    pub kate_samples: usize,
    /// Floor applied to per-prompt probabilities by the product combiner
    #[arg(long, default_value_t = 1e-4)]
    pub product_epsilon: f64,

    /// Longest antecedent kept, in tokens
    #[arg(long, default_value_t = 250)]
    pub max_ante_tokens: usize,
    /// Minimum of the largest per-prompt probability [default: 0 for kate, 0.02 otherwise]
    #[arg(long)]
    pub per_prompt_min: Option<f64>,
    /// Minimum combined probability [default: 0 for kate, 0.1 otherwise]
    #[arg(long)]
    pub combined_min: Option<f64>,
    /// Keep substrings of other candidates as separate antecedents
    #[arg(long)]
    pub no_merge: bool,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    /// Labeled test corpus
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Report JSON [default: standard output]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Run manifest (JSONL) for replay
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL of {"key": "doc:start-end", "antecedents": [surface, ...]}
    #[arg(long)]
    pub predictions: PathBuf,
    /// Labeled corpus holding the gold antecedents
    #[arg(long)]
    pub gold: PathBuf,
    /// Report JSON [default: standard output]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// JSONL of {"doc_id", "text"}
    #[arg(long)]
    pub unlabeled: PathBuf,
    /// Number of anaphors to pseudo-label
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: FormatArg,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Drop reasons and counts as JSON
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report JSON [default: standard output]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Outcome classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Backend(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Backend(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Lm(lm) => CliError::Backend(lm.to_string()),
            other => invalid(other),
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Detect(a) => cmd_detect(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Resolve(a) => cmd_resolve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes()).map_err(invalid)
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load_rules(path: Option<&Path>, case_sensitive: bool) -> Result<RuleSet, CliError> {
    match path {
        Some(p) => RuleSet::from_file(p, case_sensitive).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None if case_sensitive => RuleSet::parse(crate::anaphor::DEFAULT_RULES, true).map_err(invalid),
        None => Ok(RuleSet::default_rules()),
    }
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    load_corpus(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
struct OffsetPair {
    start: usize,
    end: usize,
}

#[derive(Debug, Deserialize)]
struct DetectInput {
    doc_id: String,
    text: String,
    #[serde(default)]
    anaphors: Option<Vec<OffsetPair>>,
}

#[derive(Debug, Serialize)]
struct DetectOutput<'a> {
    doc_id: &'a str,
    anaphors: &'a [Span],
}

fn cmd_detect(a: DetectArgs) -> Result<(), CliError> {
    let rules = load_rules(a.rules.as_deref(), a.case_sensitive)?;
    let file = std::fs::File::open(&a.input).map_err(|e| invalid(format!("{}: {e}", a.input.display())))?;
    let mut out = String::new();
    let (mut tp, mut fp, mut fn_, mut gold_docs) = (0, 0, 0, 0);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(invalid)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DetectInput =
            serde_json::from_str(&line).map_err(|e| invalid(format!("{} line {}: {e}", a.input.display(), i + 1)))?;
        let found = detect_anaphors(&doc.text, &rules);
        if let Some(gold) = &doc.anaphors {
            let gold: Vec<Span> = gold
                .iter()
                .map(|g| {
                    Span::new(&doc.text, g.start, g.end)
                        .ok_or_else(|| invalid(format!("{} line {}: invalid gold span", a.input.display(), i + 1)))
                })
                .collect::<Result<_, _>>()?;
            let r = evaluate_detection(&found, &gold);
            tp += r.true_positives;
            fp += r.false_positives;
            fn_ += r.false_negatives;
            gold_docs += 1;
        }
        out.push_str(&serde_json::to_string(&DetectOutput {
            doc_id: &doc.doc_id,
            anaphors: &found,
        })
        .expect("detections serialize"));
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)?;
    if gold_docs > 0 {
        let report = DetectionReport::from_counts(tp, fp, fn_);
        eprintln!(
            "detection over {gold_docs} document(s): precision {:.4} recall {:.4} f1 {:.4}",
            report.precision, report.recall, report.f1
        );
        if let Some(p) = &a.report {
            emit(Some(p), &to_json(&report))?;
        }
    } else if a.report.is_some() {
        return Err(invalid("--report needs gold \"anaphors\" in the input"));
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<(), CliError> {
    let train = load(&a.train)?;
    let sample = sample_kshot(&train, a.k, a.seed).map_err(invalid)?;
    let body: String = sample.examples.iter().map(|e| e.to_json_line() + "\n").collect();
    emit(a.out.as_deref(), &body)
}

impl EngineArgs {
    fn seeds(&self) -> Vec<u64> {
        match (self.seed, self.seeds.is_empty()) {
            (Some(s), _) => vec![s],
            (None, false) => self.seeds.clone(),
            (None, true) => vec![0],
        }
    }

    fn config(&self) -> Result<RunConfig, CliError> {
        let combiner: CombinerKind = self.combiner.into();
        let seed = self.seeds()[0];
        let mut c = RunConfig::for_combiner(combiner, self.k, seed);
        if let Some(d) = self.demos_per_prompt {
            c.prompt.d = d;
        }
        c.prompt.max_prompts = self.max_prompts;
        c.prompt.ordering = match self.ordering {
            OrderingArg::Ascend => Ordering::Ascend,
            OrderingArg::Descend => Ordering::Descend,
            OrderingArg::Mixed => Ordering::Mixed,
        };
        c.prompt.selection = match self.selection {
            SelectionArg::TopGated => Selection::TopGated,
            SelectionArg::SeededRandom => Selection::SeededRandom,
        };
        c.prompt.max_sequence_length = self.max_seq_len;
        c.prompt.generation_reserve = self.gen_reserve;
        if let Some(t) = &self.template {
            c.template = Template::from_file(t).map_err(invalid)?;
        }
        match self.decode {
            Some(DecodeArg::Greedy) => {
                c.decode.mode = DecodeMode::Greedy;
                c.decode.temperature = 0.0;
            }
            Some(DecodeArg::Nucleus) => {
                c.decode.mode = DecodeMode::Nucleus;
                c.decode.temperature = 1.0;
            }
            None => {}
        }
        c.decode.top_k = self.top_k;
        c.decode.top_p = self.top_p;
        c.kate_plus_samples = self.kate_samples;
        c.product_epsilon = self.product_epsilon;
        c.gate_combine = match self.gate_combine {
            GateArg::Sum => GateCombine::Sum,
            GateArg::Product => GateCombine::Product,
        };
        c.filter.max_len_tokens = self.max_ante_tokens;
        if let Some(v) = self.per_prompt_min {
            c.filter.per_prompt_threshold = v;
        }
        if let Some(v) = self.combined_min {
            c.filter.combined_threshold = v;
        }
        c.filter.merge_substrings = !self.no_merge;
        c.validate().map_err(invalid)?;
        Ok(c)
    }

    fn embedder(&self) -> Arc<dyn Embedder> {
        match &self.embed_endpoint {
            Some(url) => Arc::new(RemoteEmbedder::new(url.clone())),
            None => Arc::new(HashingEmbedder::default()),
        }
    }

    /// `known` supplies examples to oracle-style mocks.
    fn backend(
        &self,
        known: &[&Dataset],
        embedder: Arc<dyn Embedder>,
        tokenizer: Arc<dyn Tokenizer>,
        template: &Template,
    ) -> Result<Arc<dyn LmBackend>, CliError> {
        if let Some(path) = &self.lm_mock {
            let fixture = MockFixture::from_file(path).map_err(invalid)?;
            return Ok(match fixture.mode {
                MockMode::NoisyOracle => Arc::new(
                    NoisyOracle::from_fixture(fixture, known, embedder, tokenizer, template.clone()).map_err(invalid)?,
                ),
                _ => Arc::new(
                    ScriptedBackend::from_fixture(fixture, known.last().copied(), tokenizer, template.clone())
                        .map_err(invalid)?,
                ),
            });
        }
        if let Some(url) = &self.lm_endpoint {
            let mut cfg = HttpBackendConfig::new(url.clone());
            cfg.token = std::env::var("MICE_LM_TOKEN").ok().filter(|t| !t.is_empty());
            cfg.max_in_flight = self.parallelism.max(1);
            return Ok(Arc::new(HttpBackend::new(cfg)));
        }
        Err(invalid("no backend: pass --lm-endpoint (or set MICE_LM_ENDPOINT) or --lm-mock"))
    }
}

fn cmd_resolve(a: ResolveArgs) -> Result<(), CliError> {
    let e = &a.engine;
    let config = e.config()?;
    let train = load(&e.train)?;
    let test = load(&a.corpus)?;
    let tokenizer: Arc<dyn Tokenizer> = Arc::new(WordPunctTokenizer);
    let embedder = e.embedder();
    let backend = e.backend(&[&train, &test], embedder.clone(), tokenizer.clone(), &config.template)?;
    let resolver = Resolver::new(tokenizer, embedder, backend, e.parallelism).map_err(invalid)?;

    let started = std::time::Instant::now();
    let (report, manifests) = resolver.run_seeds(&config, &train, &test, &e.seeds())?;
    eprint!("{}", report.to_table());
    eprintln!(
        "{} backend request(s) in {:.2}s",
        resolver.requests(),
        started.elapsed().as_secs_f64()
    );
    if let Some(p) = &a.manifest {
        write_manifests(p, &manifests)?;
    }
    emit(a.report.as_deref(), &to_json(&report))?;

    let failed: Vec<&str> = manifests
        .iter()
        .flat_map(|m| &m.entries)
        .filter(|en| en.is_backend_failure())
        .map(|en| en.test_key.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Backend(format!(
            "backend failed on {} test input(s), first {}; they were scored as empty",
            failed.len(),
            failed[0]
        )));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    key: String,
    antecedents: Vec<String>,
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let gold_set = load(&a.gold)?;
    let gold = crate::metrics::gold_map(&gold_set.examples);
    let file = std::fs::File::open(&a.predictions).map_err(|e| invalid(format!("{}: {e}", a.predictions.display())))?;
    let mut preds: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(invalid)?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(&line)
            .map_err(|e| invalid(format!("{} line {}: {e}", a.predictions.display(), i + 1)))?;
        if preds.insert(p.key.clone(), p.antecedents).is_some() {
            return Err(invalid(format!("duplicate prediction for {}", p.key)));
        }
    }
    let report = micro_f1(&preds, &gold).map_err(invalid)?;
    eprint!("{}", report.to_table());
    emit(a.report.as_deref(), &to_json(&report))
}

fn cmd_distill(a: DistillArgs) -> Result<(), CliError> {
    let e = &a.engine;
    let config = e.config()?;
    let seed = e.seeds()[0];
    if e.seeds().len() > 1 {
        return Err(invalid("distill takes a single --seed"));
    }
    let train = load(&e.train)?;
    let docs = load_unlabeled(&a.unlabeled).map_err(invalid)?;
    let rules = load_rules(a.rules.as_deref(), false)?;
    let tokenizer: Arc<dyn Tokenizer> = Arc::new(WordPunctTokenizer);
    let embedder = e.embedder();
    let backend = e.backend(&[&train], embedder.clone(), tokenizer.clone(), &config.template)?;
    let resolver = Resolver::new(tokenizer, embedder, backend, e.parallelism).map_err(invalid)?;
    let sample = sample_kshot(&train, config.k, seed).map_err(invalid)?;
    let format = match a.format {
        FormatArg::Jsonl => ExportFormat::Jsonl,
        FormatArg::Conll => ExportFormat::Conll,
    };
    match generate_pseudo_labels(&docs, &resolver, &config, &sample, &rules, a.count, seed) {
        Ok((records, manifest)) => {
            export_to_path(&records, &a.out, format).map_err(invalid)?;
            if let Some(p) = &a.manifest {
                emit(Some(p), &to_json(&manifest))?;
            }
            eprintln!(
                "exported {} record(s) from {} detected anaphor(s); {} surface(s) dropped, {} input(s) skipped",
                manifest.exported,
                manifest.detected,
                manifest.dropped_surfaces.len(),
                manifest.skipped_examples.len()
            );
            Ok(())
        }
        Err(DistillError::Backend {
            failed_key,
            message,
            completed,
        }) => {
            let mut partial = a.out.clone().into_os_string();
            partial.push(".partial");
            let partial = PathBuf::from(partial);
            export_to_path(&completed, &partial, format).map_err(invalid)?;
            Err(CliError::Backend(format!(
                "backend failed on {failed_key}: {message}; {} completed record(s) saved to {}",
                completed.len(),
                partial.display()
            )))
        }
        Err(DistillError::Pipeline(p)) => Err(p.into()),
        Err(other) => Err(invalid(other)),
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifests = read_manifests(&a.manifest).map_err(invalid)?;
    let tokenizer = WordPunctTokenizer;
    let replayed = manifests
        .iter()
        .map(|m| replay(m, &tokenizer))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    for (orig, new) in manifests.iter().zip(&replayed) {
        for (o, n) in orig.entries.iter().zip(&new.entries) {
            if o.final_set != n.final_set {
                log::warn!("{}: replayed final set differs from the recorded one", o.test_key);
            }
        }
    }
    let report = RunReport::from_manifests(&replayed).map_err(invalid)?;
    eprint!("{}", report.to_table());
    emit(a.report.as_deref(), &to_json(&report))
}
