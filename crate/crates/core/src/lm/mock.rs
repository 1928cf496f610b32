//! Deterministic in-process backends.
//!
//! [`ScriptedBackend`] is driven by a JSON fixture:
//!
//! ```json
//! {
//!   "mode": "scripted",
//!   "rules": [
//!     {
//!       "when": {"test_doc_id": "doc7", "demos_include": ["doc2:40-51"]},
//!       "respond": {
//!         "answer": "water | DCM",
//!         "slots": [{"water": 0.8, "DCM": 0.1}, {"DCM": 0.7}]
//!       }
//!     }
//!   ],
//!   "default": {"answer": ""}
//! }
//! ```
//!
//! A rule matches when every predicate it names holds (`test_doc_id`,
//! `test_key`, `demos_include` as example keys or doc ids,
//! `prompt_contains`). The first matching rule answers; otherwise `default`.
//!
//! A response either fixes the answer line (`answer`, with optional
//! first-token distributions per answer slot in `slots`) or gives per-slot
//! surface distributions in `choices`; greedy decoding takes each slot's
//! argmax and nucleus decoding samples each slot from its nucleus. A choice
//! of `""` stands for "no antecedent in this slot".
//!
//! `"mode": "oracle-echo"` answers every prompt with the gold antecedents of
//! its test input, read from `answer_key` (a corpus JSONL path) or from a
//! dataset supplied by the caller. `"mode": "noisy-oracle"` builds a
//! [`NoisyOracle`] from the `noise` block.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::sampling::{argmax, sample_nucleus};
use super::{truncate_top, CompletionRequest, DecodeMode, DecodeParams, Generation, LmBackend, LmError, Tokenizer};
use crate::combine::first_token;
use crate::corpus::{load_corpus, Dataset, Example, ExampleKey};
use crate::prompt::{answer_mentions, linearize_antecedents, render_example, Template};
use crate::rng::{derive_seed, hash_str, SplitMix64};
use crate::similarity::{cosine, Embedder, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockMode {
    #[default]
    Scripted,
    OracleEcho,
    NoisyOracle,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Predicate {
    pub test_doc_id: Option<String>,
    pub test_key: Option<String>,
    pub demos_include: Vec<String>,
    pub prompt_contains: Option<String>,
}

impl Predicate {
    fn matches(&self, req: &CompletionRequest) -> bool {
        let meta = req.meta.as_ref();
        if let Some(doc) = &self.test_doc_id {
            if meta.map(|m| &m.test_key.doc_id) != Some(doc) {
                return false;
            }
        }
        if let Some(key) = &self.test_key {
            if meta.map(|m| m.test_key.to_string()).as_ref() != Some(key) {
                return false;
            }
        }
        for want in &self.demos_include {
            let present = meta.is_some_and(|m| {
                m.demo_keys
                    .iter()
                    .any(|k| &k.to_string() == want || &k.doc_id == want)
            });
            if !present {
                return false;
            }
        }
        if let Some(s) = &self.prompt_contains {
            if !req.prompt.contains(s.as_str()) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockResponse {
    pub answer: Option<String>,
    pub slots: Vec<BTreeMap<String, f64>>,
    pub choices: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub when: Predicate,
    pub respond: MockResponse,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockFixture {
    pub mode: MockMode,
    pub rules: Vec<MockRule>,
    pub default: Option<MockResponse>,
    pub answer_key: Option<PathBuf>,
    pub noise: Option<NoisyOracleConfig>,
}

impl MockFixture {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LmError::Fixture(format!("{}: {e}", path.display())))?;
        let mut fixture: MockFixture =
            serde_json::from_str(&text).map_err(|e| LmError::Fixture(format!("{}: {e}", path.display())))?;
        // Relative answer-key paths resolve against the fixture's directory.
        if let (Some(key), Some(dir)) = (&fixture.answer_key, path.parent()) {
            if key.is_relative() {
                fixture.answer_key = Some(dir.join(key));
            }
        }
        Ok(fixture)
    }
}

/// Assembles a generation from an answer line: tokenizes it, applies stop
/// sequences and `max_tokens`, and attaches `slot_dists[j]` at the token
/// where the j-th answer mention starts. Other positions carry the emitted
/// token with probability 1.
pub fn scripted_generation(
    answer: &str,
    slot_dists: &[BTreeMap<String, f64>],
    params: &DecodeParams,
    tokenizer: &dyn Tokenizer,
    template: &Template,
) -> Generation {
    let mut text = answer.to_string();
    for stop in &params.stop_sequences {
        if let Some(at) = text.find(stop.as_str()) {
            text.truncate(at);
        }
    }
    let mut tokens = tokenizer.tokenize(&text);
    if tokens.len() > params.max_tokens {
        tokens.truncate(params.max_tokens);
        text = tokens.concat();
    }
    let offsets = super::tokenizer::piece_offsets(&tokens);
    let mut top_probs: Vec<BTreeMap<String, f64>> =
        tokens.iter().map(|t| BTreeMap::from([(t.clone(), 1.0)])).collect();
    for (j, mention) in answer_mentions(&text, template).iter().enumerate() {
        let Some(dist) = slot_dists.get(j) else { break };
        if let Some(pos) = offsets.iter().position(|&(s, e)| s <= mention.char_start && mention.char_start < e) {
            let cleaned: BTreeMap<String, f64> = dist.iter().filter(|(_, &p)| p > 0.0).map(|(k, &v)| (k.clone(), v.min(1.0))).collect();
            if !cleaned.is_empty() {
                top_probs[pos] = cleaned;
            }
        }
    }
    let top_probs = top_probs
        .iter()
        .map(|d| truncate_top(d, params.logprob_depth.max(1)))
        .collect();
    Generation { text, tokens, top_probs }
}

/// First-token distribution implied by a distribution over surfaces.
fn first_token_dist(choices: &BTreeMap<String, f64>, tokenizer: &dyn Tokenizer) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (surface, &p) in choices {
        if p <= 0.0 {
            continue;
        }
        if let Some(tok) = first_token(surface, tokenizer) {
            *out.entry(tok).or_insert(0.0) += p;
        }
    }
    for v in out.values_mut() {
        *v = f64::min(*v, 1.0);
    }
    out
}

enum Mode {
    Scripted {
        rules: Vec<MockRule>,
        default: MockResponse,
    },
    OracleEcho {
        answers: HashMap<ExampleKey, Example>,
    },
}

/// Fixture-driven mock backend. Safe under concurrent calls.
pub struct ScriptedBackend {
    mode: Mode,
    tokenizer: Arc<dyn Tokenizer>,
    template: Template,
}

impl ScriptedBackend {
    pub fn scripted(rules: Vec<MockRule>, default: MockResponse, tokenizer: Arc<dyn Tokenizer>, template: Template) -> Self {
        Self {
            mode: Mode::Scripted { rules, default },
            tokenizer,
            template,
        }
    }

    /// Answers with the gold antecedents of each prompt's test input.
    pub fn oracle_echo(answer_key: &Dataset, tokenizer: Arc<dyn Tokenizer>, template: Template) -> Self {
        let answers = answer_key.examples.iter().map(|e| (e.key(), e.clone())).collect();
        Self {
            mode: Mode::OracleEcho { answers },
            tokenizer,
            template,
        }
    }

    /// Builds the backend a fixture describes. `fallback_key` supplies the
    /// answer key for oracle modes when the fixture names none.
    pub fn from_fixture(
        fixture: MockFixture,
        fallback_key: Option<&Dataset>,
        tokenizer: Arc<dyn Tokenizer>,
        template: Template,
    ) -> Result<Self, LmError> {
        match fixture.mode {
            MockMode::Scripted => Ok(Self::scripted(
                fixture.rules,
                fixture.default.unwrap_or_default(),
                tokenizer,
                template,
            )),
            MockMode::OracleEcho => {
                let key = load_answer_key(fixture.answer_key.as_deref(), fallback_key)?;
                Ok(Self::oracle_echo(&key, tokenizer, template))
            }
            MockMode::NoisyOracle => Err(LmError::Fixture(
                "noisy-oracle fixtures are built with NoisyOracle::from_fixture".into(),
            )),
        }
    }

    fn respond(&self, req: &CompletionRequest) -> Result<Generation, LmError> {
        match &self.mode {
            Mode::OracleEcho { answers } => {
                let answer = req
                    .meta
                    .as_ref()
                    .and_then(|m| answers.get(&m.test_key))
                    .and_then(|e| e.gold_antecedents.as_ref())
                    .and_then(|g| linearize_antecedents(g, &self.template).ok())
                    .unwrap_or_default();
                let slots: Vec<BTreeMap<String, f64>> = answer_mentions(&answer, &self.template)
                    .iter()
                    .filter_map(|m| first_token(&m.surface, self.tokenizer.as_ref()))
                    .map(|t| BTreeMap::from([(t, 1.0)]))
                    .collect();
                Ok(scripted_generation(&answer, &slots, &req.params, self.tokenizer.as_ref(), &self.template))
            }
            Mode::Scripted { rules, default } => {
                let response = rules
                    .iter()
                    .find(|r| r.when.matches(req))
                    .map(|r| &r.respond)
                    .unwrap_or(default);
                self.render_response(response, req)
            }
        }
    }

    fn render_response(&self, response: &MockResponse, req: &CompletionRequest) -> Result<Generation, LmError> {
        let tok = self.tokenizer.as_ref();
        if response.choices.is_empty() {
            let answer = response.answer.clone().unwrap_or_default();
            return Ok(scripted_generation(&answer, &response.slots, &req.params, tok, &self.template));
        }
        let mut rng = SplitMix64::new(derive_seed(&[req.params.seed, hash_str(&req.prompt)]));
        let mut picked = Vec::new();
        let mut slot_dists = Vec::new();
        for choices in &response.choices {
            let dist: Vec<(&str, f64)> = choices.iter().map(|(k, &v)| (k.as_str(), v)).collect();
            let surface = match req.params.mode {
                DecodeMode::Greedy => argmax(&dist),
                DecodeMode::Nucleus => sample_nucleus(
                    &dist,
                    req.params.top_k,
                    req.params.top_p,
                    req.params.temperature,
                    &mut rng,
                ),
            }
            .ok_or_else(|| LmError::Fixture("empty choice distribution".into()))?;
            if surface.trim().is_empty() {
                continue;
            }
            picked.push(surface);
            slot_dists.push(first_token_dist(choices, tok));
        }
        let joiner = format!(" {} ", self.template.separator.trim());
        let answer = picked.join(&joiner);
        Ok(scripted_generation(&answer, &slot_dists, &req.params, tok, &self.template))
    }
}

impl LmBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Generation, LmError> {
        request.params.validate()?;
        self.respond(request)
    }
}

fn load_answer_key(path: Option<&Path>, fallback: Option<&Dataset>) -> Result<Dataset, LmError> {
    match (path, fallback) {
        (Some(p), _) => load_corpus(p).map_err(|e| LmError::Fixture(format!("answer key {}: {e}", p.display()))),
        (None, Some(d)) => Ok(d.clone()),
        (None, None) => Err(LmError::Fixture("oracle mode needs an answer key".into())),
    }
}

/// Parameters of the scripted-noise oracle.
///
/// For a prompt whose demonstrations have mean cosine similarity `s` to the
/// test input, the expert's accuracy is
/// `clamp(base_accuracy + similarity_gain * s, min_accuracy, max_accuracy)`.
/// Each gold antecedent is emitted with that probability. Each of
/// `max_distractors` slots then emits a wrong antecedent with probability
/// `distractor_rate * (1 - accuracy)`, drawn uniformly from
/// `distractor_source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyOracleConfig {
    pub base_accuracy: f64,
    pub similarity_gain: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub distractor_rate: f64,
    pub max_distractors: usize,
    pub distractor_source: DistractorSource,
    pub seed: u64,
}

/// Where a noisy expert's wrong answers come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistractorSource {
    /// Gold antecedents of the prompt's own demonstrations that are not gold
    /// for the test input: the expert copies from its examples.
    #[default]
    Demonstrations,
    /// Words of three or more characters preceding the anaphor that lie
    /// outside every gold span.
    Document,
}

impl Default for NoisyOracleConfig {
    fn default() -> Self {
        Self {
            base_accuracy: 0.2,
            similarity_gain: 0.8,
            min_accuracy: 0.05,
            max_accuracy: 0.9,
            distractor_rate: 1.0,
            max_distractors: 2,
            distractor_source: DistractorSource::Demonstrations,
            seed: 0,
        }
    }
}

impl NoisyOracleConfig {
    pub fn accuracy(&self, mean_similarity: f64) -> f64 {
        (self.base_accuracy + self.similarity_gain * mean_similarity).clamp(self.min_accuracy, self.max_accuracy)
    }
}

/// A mock expert that knows the gold answers but errs more when its
/// demonstrations are less similar to the test input. Output is a pure
/// function of the prompt text, the demonstration set and the seed.
pub struct NoisyOracle {
    config: NoisyOracleConfig,
    examples: HashMap<ExampleKey, Example>,
    embedder: Arc<dyn Embedder>,
    tokenizer: Arc<dyn Tokenizer>,
    template: Template,
    cache: Mutex<HashMap<ExampleKey, EmbeddingVector>>,
}

impl NoisyOracle {
    /// `known` must contain every demonstration and test example the oracle
    /// will see (typically the training split plus the test split).
    pub fn new(
        config: NoisyOracleConfig,
        known: &[&Dataset],
        embedder: Arc<dyn Embedder>,
        tokenizer: Arc<dyn Tokenizer>,
        template: Template,
    ) -> Self {
        let examples = known
            .iter()
            .flat_map(|d| d.examples.iter())
            .map(|e| (e.key(), e.clone()))
            .collect();
        Self {
            config,
            examples,
            embedder,
            tokenizer,
            template,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_fixture(
        fixture: MockFixture,
        known: &[&Dataset],
        embedder: Arc<dyn Embedder>,
        tokenizer: Arc<dyn Tokenizer>,
        template: Template,
    ) -> Result<Self, LmError> {
        let mut sets: Vec<Dataset> = Vec::new();
        if let Some(p) = fixture.answer_key.as_deref() {
            sets.push(load_answer_key(Some(p), None)?);
        }
        let mut all: Vec<&Dataset> = known.to_vec();
        all.extend(sets.iter());
        Ok(Self::new(fixture.noise.unwrap_or_default(), &all, embedder, tokenizer, template))
    }

    fn embedding(&self, key: &ExampleKey) -> Result<Option<EmbeddingVector>, LmError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(key) {
            return Ok(Some(v.clone()));
        }
        let Some(ex) = self.examples.get(key) else { return Ok(None) };
        let text = render_example(ex, &self.template, false).map_err(|e| LmError::Fixture(e.to_string()))?;
        let v = self.embedder.embed(&text).map_err(|e| LmError::Fixture(e.to_string()))?;
        self.cache.lock().expect("cache lock").insert(key.clone(), v.clone());
        Ok(Some(v))
    }

    fn mean_similarity(&self, test: &ExampleKey, demos: &[ExampleKey]) -> Result<f64, LmError> {
        let Some(t) = self.embedding(test)? else { return Ok(0.0) };
        let mut sims = Vec::new();
        for d in demos {
            if let Some(v) = self.embedding(d)? {
                sims.push(cosine(&t, &v).map_err(|e| LmError::Fixture(e.to_string()))?);
            }
        }
        Ok(if sims.is_empty() { 0.0 } else { sims.iter().sum::<f64>() / sims.len() as f64 })
    }
}

impl LmBackend for NoisyOracle {
    fn complete(&self, req: &CompletionRequest) -> Result<Generation, LmError> {
        req.params.validate()?;
        let Some(meta) = &req.meta else {
            return Ok(Generation::empty());
        };
        let Some(test) = self.examples.get(&meta.test_key) else {
            return Ok(Generation::empty());
        };
        let accuracy = self.config.accuracy(self.mean_similarity(&meta.test_key, &meta.demo_keys)?);
        let mut seed_parts = vec![self.config.seed, hash_str(&req.prompt)];
        if req.params.mode == DecodeMode::Nucleus {
            seed_parts.push(req.params.seed);
        }
        let mut rng = SplitMix64::new(derive_seed(&seed_parts));

        let gold = test.gold_antecedents.clone().unwrap_or_default();
        // (document position, surface, confidence)
        let mut picked: Vec<(usize, String, f64)> = Vec::new();
        for span in &gold {
            if rng.next_f64() < accuracy {
                picked.push((span.start, span.surface.clone(), accuracy));
            }
        }
        // Distractors carry position usize::MAX so they follow the gold
        // antecedents in the answer line.
        let pool: Vec<(usize, String)> = match self.config.distractor_source {
            DistractorSource::Demonstrations => {
                let mut seen: Vec<String> = Vec::new();
                for key in &meta.demo_keys {
                    let Some(demo) = self.examples.get(key) else { continue };
                    for s in demo.gold_antecedents.iter().flatten() {
                        if !gold.iter().any(|g| g.surface == s.surface) && !seen.contains(&s.surface) {
                            seen.push(s.surface.clone());
                        }
                    }
                }
                seen.into_iter().map(|s| (usize::MAX, s)).collect()
            }
            DistractorSource::Document => {
                let prefix: String = test.text.chars().take(test.anaphor.start).collect();
                word_positions(&prefix)
                    .into_iter()
                    .filter(|(pos, w)| {
                        w.chars().count() >= 3
                            && !gold
                                .iter()
                                .any(|g| g.surface.contains(w.as_str()) && g.start <= *pos && *pos < g.end)
                    })
                    .collect()
            }
        };
        for _ in 0..self.config.max_distractors {
            if pool.is_empty() {
                break;
            }
            if rng.next_f64() < self.config.distractor_rate * (1.0 - accuracy) {
                let (pos, w) = &pool[rng.below(pool.len() as u64) as usize];
                if !picked.iter().any(|(_, s, _)| s == w) {
                    picked.push((*pos, w.clone(), 1.0 - accuracy));
                }
            }
        }
        picked.sort_by_key(|(pos, _, _)| *pos);
        let joiner = format!(" {} ", self.template.separator.trim());
        let answer = picked.iter().map(|(_, s, _)| s.as_str()).collect::<Vec<_>>().join(&joiner);
        let slots: Vec<BTreeMap<String, f64>> = picked
            .iter()
            .filter_map(|(_, s, conf)| first_token(s, self.tokenizer.as_ref()).map(|t| BTreeMap::from([(t, conf.clamp(1e-6, 1.0))])))
            .collect();
        Ok(scripted_generation(&answer, &slots, &req.params, self.tokenizer.as_ref(), &self.template))
    }
}

/// Alphanumeric words of `text` with their character offsets.
fn word_positions(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            if cur.is_empty() {
                start = i;
            }
            cur.push(c);
        } else if !cur.is_empty() {
            out.push((start, std::mem::take(&mut cur)));
        }
    }
    if !cur.is_empty() {
        out.push((start, cur));
    }
    out
}
