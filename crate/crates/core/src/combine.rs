//! Per-prompt predictions and the rules that combine them across experts.
//!
//! * MICE: `P(y|x) = Σ_z P(y|z,x) P(z|x)`, with `P(y|z,x)` estimated as the
//!   largest probability the prompt's answer slots give to `y`'s first token.
//! * MICE-S: the same mixture with `P(y|z,x)` replaced by the indicator that
//!   prompt `z` generated `y`.
//! * Product: `Π_z max(P(y|z,x), ε)`.
//! * KATE / KATE+: a single nearest-neighbour prompt, decoded greedily or
//!   sampled `n` times and combined like MICE-S under uniform weights.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, KShotSample};
use crate::lm::tokenizer::piece_offsets;
use crate::lm::{CompletionRequest, DecodeMode, DecodeParams, Generation, LmBackend, LmError, Tokenizer};
use crate::prompt::{answer_mentions, Prompt, PromptBuilder, PromptError, Template};
use crate::rng::derive_seed;
use crate::similarity::GatingDistribution;

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("no predictions to combine")]
    NoPredictions,
    #[error("gating has no weight for prompt {0}")]
    MissingGate(usize),
    #[error("KATE+ requires nucleus decoding")]
    NeedsNucleus,
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinerKind {
    Mice,
    MiceS,
    Product,
    Kate,
    KatePlus,
}

impl CombinerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CombinerKind::Mice => "mice",
            CombinerKind::MiceS => "mice-s",
            CombinerKind::Product => "product",
            CombinerKind::Kate => "kate",
            CombinerKind::KatePlus => "kate-plus",
        }
    }
}

/// Trims and collapses internal whitespace runs to one space. Case is kept.
/// `None` when nothing remains.
pub fn canonicalize(surface: &str) -> Option<String> {
    let s = surface.split_whitespace().collect::<Vec<_>>().join(" ");
    (!s.is_empty()).then_some(s)
}

/// First non-blank token of the canonical surface, with surrounding
/// whitespace removed.
pub fn first_token(surface: &str, tokenizer: &dyn Tokenizer) -> Option<String> {
    let canon = canonicalize(surface)?;
    tokenizer
        .tokenize(&canon)
        .into_iter()
        .map(|t| t.trim().to_string())
        .find(|t| !t.is_empty())
}

/// The first-token distribution at one answer slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    /// Index into [`PromptPrediction::antecedents`].
    pub antecedent: usize,
    pub dist: BTreeMap<String, f64>,
}

/// What one prompt generated: its distinct antecedents and one slot per
/// generated mention (duplicates keep their own slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPrediction {
    pub prompt_id: usize,
    pub antecedents: Vec<String>,
    pub slots: Vec<Slot>,
    /// Set when some slot could not be aligned to a token position; such
    /// slots carry an empty distribution.
    pub degraded: bool,
}

impl PromptPrediction {
    pub fn empty(prompt_id: usize) -> Self {
        Self {
            prompt_id,
            antecedents: Vec::new(),
            slots: Vec::new(),
            degraded: false,
        }
    }
}

/// Slot distributions keyed by trimmed token; entries that trim to the same
/// token are summed (capped at 1).
fn normalize_dist(dist: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (tok, &p) in dist {
        let t = tok.trim();
        if !t.is_empty() && p > 0.0 {
            *out.entry(t.to_string()).or_insert(0.0) += p;
        }
    }
    for v in out.values_mut() {
        *v = f64::min(*v, 1.0);
    }
    out
}

/// Parses the answer line of `generation` and attaches to each mention the
/// top-token distribution of the token where it begins.
pub fn extract_prediction(prompt_id: usize, generation: &Generation, template: &Template) -> PromptPrediction {
    let mentions = answer_mentions(&generation.text, template);
    let aligned = generation.tokens.concat() == generation.text && generation.tokens.len() == generation.top_probs.len();
    let offsets = piece_offsets(&generation.tokens);

    let mut antecedents: Vec<String> = Vec::new();
    let mut slots = Vec::new();
    let mut degraded = false;
    for m in mentions {
        let Some(canon) = canonicalize(&m.surface) else { continue };
        let idx = match antecedents.iter().position(|a| *a == canon) {
            Some(i) => i,
            None => {
                antecedents.push(canon);
                antecedents.len() - 1
            }
        };
        let dist = if aligned {
            offsets
                .iter()
                .position(|&(s, e)| s <= m.char_start && m.char_start < e)
                .filter(|&pos| {
                    let (s, _) = offsets[pos];
                    let lead = generation.tokens[pos].chars().take_while(|c| c.is_whitespace()).count();
                    s + lead == m.char_start
                })
                .map(|pos| normalize_dist(&generation.top_probs[pos]))
        } else {
            None
        };
        if dist.is_none() {
            degraded = true;
        }
        slots.push(Slot {
            antecedent: idx,
            dist: dist.unwrap_or_default(),
        });
    }
    PromptPrediction {
        prompt_id,
        antecedents,
        slots,
        degraded,
    }
}

/// `max_j P_j(first_token)` over the prediction's slots; 0 when the token is
/// outside every slot's returned top set.
pub fn first_token_prob(first_token: &str, prediction: &PromptPrediction) -> f64 {
    prediction
        .slots
        .iter()
        .filter_map(|s| s.dist.get(first_token).copied())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAntecedent {
    pub canonical_surface: String,
    pub first_token: String,
    /// `P(y|z,x)` for prompts where it is non-zero.
    pub per_prompt_prob: BTreeMap<usize, f64>,
    pub combined_prob: f64,
}

impl CandidateAntecedent {
    pub fn max_per_prompt(&self) -> f64 {
        self.per_prompt_prob.values().copied().fold(0.0, f64::max)
    }
}

/// Orders by combined probability descending, then surface ascending.
pub fn sort_candidates(cands: &mut [CandidateAntecedent]) {
    cands.sort_by(|a, b| {
        b.combined_prob
            .total_cmp(&a.combined_prob)
            .then_with(|| a.canonical_surface.cmp(&b.canonical_surface))
    });
}

fn sorted_predictions(predictions: &[PromptPrediction]) -> Vec<&PromptPrediction> {
    let mut preds: Vec<&PromptPrediction> = predictions.iter().collect();
    preds.sort_by_key(|p| p.prompt_id);
    preds
}

fn universe(predictions: &[&PromptPrediction]) -> BTreeSet<String> {
    predictions
        .iter()
        .flat_map(|p| p.antecedents.iter())
        .filter_map(|a| canonicalize(a))
        .collect()
}

fn check_gating(predictions: &[&PromptPrediction], gating: &GatingDistribution) -> Result<(), CombineError> {
    if predictions.is_empty() {
        return Err(CombineError::NoPredictions);
    }
    for p in predictions {
        if !gating.weights.contains_key(&p.prompt_id) {
            return Err(CombineError::MissingGate(p.prompt_id));
        }
    }
    Ok(())
}

/// Mixture over prompts with first-token probabilities. Candidates with zero
/// combined mass are dropped.
pub fn combine_mice(
    predictions: &[PromptPrediction],
    gating: &GatingDistribution,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<CandidateAntecedent>, CombineError> {
    let preds = sorted_predictions(predictions);
    check_gating(&preds, gating)?;
    let mut out = Vec::new();
    for surface in universe(&preds) {
        let Some(tok) = first_token(&surface, tokenizer) else { continue };
        let mut per_prompt = BTreeMap::new();
        let mut combined = 0.0;
        for p in &preds {
            let prob = first_token_prob(&tok, p);
            if prob > 0.0 {
                per_prompt.insert(p.prompt_id, prob);
                combined += prob * gating.weight(p.prompt_id);
            }
        }
        if combined > 0.0 {
            out.push(CandidateAntecedent {
                canonical_surface: surface,
                first_token: tok,
                per_prompt_prob: per_prompt,
                combined_prob: combined.min(1.0),
            });
        }
    }
    sort_candidates(&mut out);
    Ok(out)
}

/// Mixture over prompts with generation indicators.
pub fn combine_mice_sample(
    predictions: &[PromptPrediction],
    gating: &GatingDistribution,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<CandidateAntecedent>, CombineError> {
    let preds = sorted_predictions(predictions);
    check_gating(&preds, gating)?;
    let mut out = Vec::new();
    for surface in universe(&preds) {
        let mut per_prompt = BTreeMap::new();
        let mut combined = 0.0;
        for p in &preds {
            if p.antecedents.iter().any(|a| canonicalize(a).as_deref() == Some(surface.as_str())) {
                per_prompt.insert(p.prompt_id, 1.0);
                combined += gating.weight(p.prompt_id);
            }
        }
        if combined > 0.0 {
            out.push(CandidateAntecedent {
                first_token: first_token(&surface, tokenizer).unwrap_or_default(),
                canonical_surface: surface,
                per_prompt_prob: per_prompt,
                combined_prob: combined.min(1.0),
            });
        }
    }
    sort_candidates(&mut out);
    Ok(out)
}

/// Product of floored first-token probabilities across prompts.
pub fn combine_product(
    predictions: &[PromptPrediction],
    epsilon: f64,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<CandidateAntecedent>, CombineError> {
    let preds = sorted_predictions(predictions);
    if preds.is_empty() {
        return Err(CombineError::NoPredictions);
    }
    let mut out = Vec::new();
    for surface in universe(&preds) {
        let Some(tok) = first_token(&surface, tokenizer) else { continue };
        let mut per_prompt = BTreeMap::new();
        let mut combined = 1.0;
        for p in &preds {
            let prob = first_token_prob(&tok, p);
            if prob > 0.0 {
                per_prompt.insert(p.prompt_id, prob);
            }
            combined *= prob.max(epsilon);
        }
        out.push(CandidateAntecedent {
            canonical_surface: surface,
            first_token: tok,
            per_prompt_prob: per_prompt,
            combined_prob: combined,
        });
    }
    sort_candidates(&mut out);
    Ok(out)
}

/// The single KNN prompt of the KATE baseline.
pub fn select_kate_prompt(
    builder: &PromptBuilder,
    sample: &KShotSample,
    test_input: &Example,
    sims: &[f64],
) -> Result<Prompt, PromptError> {
    builder.knn_prompt(sample, test_input, sims)
}

/// Samples `n_samples` completions of `prompt` with seeds derived from
/// `decode.seed` and the sample index, returning one prediction per sample
/// (prompt ids `0..n_samples`).
pub fn sample_kate_plus(
    backend: &dyn LmBackend,
    prompt: &Prompt,
    n_samples: usize,
    decode: &DecodeParams,
    template: &Template,
) -> Result<Vec<PromptPrediction>, CombineError> {
    if decode.mode != DecodeMode::Nucleus {
        return Err(CombineError::NeedsNucleus);
    }
    decode.validate()?;
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut params = decode.clone();
            params.seed = derive_seed(&[decode.seed, i as u64]);
            let req = CompletionRequest {
                prompt_id: i,
                prompt: prompt.rendered.clone(),
                params,
                meta: Some(prompt.meta()),
            };
            let g = backend.complete(&req)?;
            Ok(extract_prediction(i, &g, template))
        })
        .collect()
}

/// Combines KATE+ samples with the indicator rule under uniform weights.
pub fn combine_kate_plus(
    samples: &[PromptPrediction],
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<CandidateAntecedent>, CombineError> {
    let gating = GatingDistribution::uniform(samples.iter().map(|p| p.prompt_id));
    combine_mice_sample(samples, &gating, tokenizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::WordPunctTokenizer;

    fn pred(id: usize, ants: &[&str], slots: &[&[(&str, f64)]]) -> PromptPrediction {
        PromptPrediction {
            prompt_id: id,
            antecedents: ants.iter().map(|s| s.to_string()).collect(),
            slots: slots
                .iter()
                .enumerate()
                .map(|(j, d)| Slot {
                    antecedent: j.min(ants.len().saturating_sub(1)),
                    dist: d.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                })
                .collect(),
            degraded: false,
        }
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize("  water  (50 mL) ").as_deref(), Some("water (50 mL)"));
        assert_ne!(canonicalize("Water"), canonicalize("water"));
        assert_eq!(canonicalize(""), None);
        assert_eq!(canonicalize(" \t "), None);
    }

    #[test]
    fn first_token_skips_blank() {
        assert_eq!(first_token(" compound 54", &WordPunctTokenizer).as_deref(), Some("compound"));
        assert_eq!(first_token("(40 mL)", &WordPunctTokenizer).as_deref(), Some("("));
    }

    #[test]
    fn eq2_max_over_slots() {
        let p = pred(0, &["water"], &[&[("water", 0.8)]]);
        assert_eq!(first_token_prob("water", &p), 0.8);
        let p = pred(0, &["water", "salt"], &[&[("water", 0.3)], &[("water", 0.6), ("salt", 0.2)]]);
        assert_eq!(first_token_prob("water", &p), 0.6);
        assert_eq!(first_token_prob("ice", &p), 0.0);
    }

    #[test]
    fn extraction_aligns_slots() {
        let g = Generation {
            text: "water | DCM".into(),
            tokens: vec!["water".into(), " ".into(), "|".into(), " DCM".into()],
            top_probs: vec![
                BTreeMap::from([("water".into(), 0.8), (" DCM".into(), 0.1)]),
                BTreeMap::from([(" ".into(), 1.0)]),
                BTreeMap::from([("|".into(), 1.0)]),
                BTreeMap::from([(" DCM".into(), 0.7)]),
            ],
        };
        let p = extract_prediction(3, &g, &Template::default());
        assert_eq!(p.antecedents, vec!["water", "DCM"]);
        assert_eq!(p.slots.len(), 2);
        assert_eq!(p.slots[0].dist["DCM"], 0.1);
        assert_eq!(p.slots[1].dist["DCM"], 0.7);
        assert!(!p.degraded);

        assert_eq!(extract_prediction(0, &Generation::empty(), &Template::default()), PromptPrediction::empty(0));
    }

    #[test]
    fn duplicate_mentions_keep_both_slots() {
        let g = Generation {
            text: "a | a".into(),
            tokens: vec!["a".into(), " ".into(), "|".into(), " a".into()],
            top_probs: vec![
                BTreeMap::from([("a".into(), 0.4)]),
                BTreeMap::from([(" ".into(), 1.0)]),
                BTreeMap::from([("|".into(), 1.0)]),
                BTreeMap::from([(" a".into(), 0.9)]),
            ],
        };
        let p = extract_prediction(0, &g, &Template::default());
        assert_eq!(p.antecedents, vec!["a"]);
        assert_eq!(p.slots.len(), 2);
        assert!(p.slots.iter().all(|s| s.antecedent == 0));
        assert_eq!(first_token_prob("a", &p), 0.9);
    }

    #[test]
    fn misaligned_tokens_degrade() {
        let g = Generation {
            text: "water".into(),
            tokens: vec!["wat".into(), "er!".into()],
            top_probs: vec![BTreeMap::new(), BTreeMap::new()],
        };
        let p = extract_prediction(0, &g, &Template::default());
        assert!(p.degraded);
        assert_eq!(p.antecedents, vec!["water"]);
        assert!(p.slots[0].dist.is_empty());
    }

    #[test]
    fn mice_examples() {
        let t = WordPunctTokenizer;
        let g = GatingDistribution::uniform([0]);
        let c = combine_mice(&[pred(0, &["water"], &[&[("water", 0.7)]])], &g, &t).unwrap();
        assert_eq!(c[0].combined_prob, 0.7);

        let g = GatingDistribution {
            weights: BTreeMap::from([(0, 0.6), (1, 0.4)]),
        };
        let preds = [
            pred(0, &["water"], &[&[("water", 0.9)]]),
            pred(1, &["water"], &[&[("water", 0.5)]]),
        ];
        let c = combine_mice(&preds, &g, &t).unwrap();
        assert!((c[0].combined_prob - 0.74).abs() < 1e-12);

        assert!(matches!(combine_mice(&[], &g, &t), Err(CombineError::NoPredictions)));
        let missing = [pred(7, &["x"], &[&[("x", 1.0)]])];
        assert!(matches!(combine_mice(&missing, &g, &t), Err(CombineError::MissingGate(7))));
    }

    #[test]
    fn mice_drops_zero_mass_candidates() {
        let t = WordPunctTokenizer;
        let g = GatingDistribution::uniform([0]);
        let c = combine_mice(&[pred(0, &["water", "salt"], &[&[("water", 0.7)], &[]])], &g, &t).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].canonical_surface, "water");
    }

    #[test]
    fn mice_s_examples() {
        let t = WordPunctTokenizer;
        let g = GatingDistribution {
            weights: BTreeMap::from([(0, 0.25), (1, 0.35), (2, 0.4)]),
        };
        let preds = [pred(0, &["a", "b"], &[]), pred(1, &["a", "b"], &[]), pred(2, &["b"], &[])];
        let c = combine_mice_sample(&preds, &g, &t).unwrap();
        assert_eq!(c[0].canonical_surface, "b");
        assert!((c[0].combined_prob - 1.0).abs() < 1e-12);
        assert!((c[1].combined_prob - 0.60).abs() < 1e-12);
        assert!(!c.iter().any(|x| x.canonical_surface == "z"));
    }

    #[test]
    fn product_examples() {
        let t = WordPunctTokenizer;
        let preds = [pred(0, &["a"], &[&[("a", 0.5)]]), pred(1, &["a"], &[&[("a", 0.5)]])];
        assert_eq!(combine_product(&preds, 1e-4, &t).unwrap()[0].combined_prob, 0.25);
        let preds = [pred(0, &["a"], &[&[("a", 0.9)]]), pred(1, &["b"], &[&[("b", 0.9)]])];
        let c = combine_product(&preds, 1e-4, &t).unwrap();
        let a = c.iter().find(|c| c.canonical_surface == "a").unwrap();
        assert!((a.combined_prob - 9e-5).abs() < 1e-15);
        let single = [pred(0, &["a"], &[&[("a", 0.3)]])];
        assert_eq!(combine_product(&single, 1e-4, &t).unwrap()[0].combined_prob, 0.3);
    }

    #[test]
    fn kate_plus_frequencies() {
        let t = WordPunctTokenizer;
        let samples: Vec<_> = (0..256)
            .map(|i| if i % 4 == 0 { pred(i, &["a", "b"], &[]) } else { pred(i, &["b"], &[]) })
            .collect();
        let c = combine_kate_plus(&samples, &t).unwrap();
        assert!((c[0].combined_prob - 1.0).abs() < 1e-12);
        assert!((c[1].combined_prob - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ordering_ties_by_surface() {
        let t = WordPunctTokenizer;
        let g = GatingDistribution::uniform([0]);
        let c = combine_mice_sample(&[pred(0, &["b", "a"], &[])], &g, &t).unwrap();
        assert_eq!(c.iter().map(|c| c.canonical_surface.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    }
}
