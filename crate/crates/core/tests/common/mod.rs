//! Shared fixtures and reference implementations for the integration tests.
//! The reference implementations re-derive results from definitions and do
//! not call into the code paths they check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use mice::combine::{CandidateAntecedent, PromptPrediction, Slot};
use mice::corpus::{Dataset, Example, Span};
use mice::distill::{build_record, DropReason, PseudoLabeledRecord};
use mice::lm::{NoisyOracle, NoisyOracleConfig, ScriptedBackend, Tokenizer, WordPunctTokenizer};
use mice::pipeline::{Resolver, RunConfig};
use mice::prompt::{Selection, Template};
use mice::similarity::{Embedder, HashingEmbedder};
use mice::synthetic::{bundled_test, bundled_train};

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn bundled() -> (Dataset, Dataset) {
    (bundled_train(), bundled_test())
}

pub fn tokenizer() -> Arc<dyn Tokenizer> {
    Arc::new(WordPunctTokenizer)
}

pub fn noisy_resolver(train: &Dataset, test: &Dataset, parallelism: usize) -> Resolver {
    let tok = tokenizer();
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let oracle = NoisyOracle::new(
        NoisyOracleConfig::default(),
        &[train, test],
        embedder.clone(),
        tok.clone(),
        Template::default(),
    );
    Resolver::new(tok, embedder, Arc::new(oracle), parallelism).unwrap()
}

pub fn echo_resolver(answer_key: &Dataset, parallelism: usize) -> Resolver {
    let tok = tokenizer();
    let backend = ScriptedBackend::oracle_echo(answer_key, tok.clone(), Template::default());
    Resolver::new(tok, Arc::new(HashingEmbedder::default()), Arc::new(backend), parallelism).unwrap()
}

/// MICE-S over `n` prompts drawn uniformly from the k^2 pair universe.
pub fn expert_config(n: usize, selection: Selection) -> RunConfig {
    let mut c = RunConfig::for_combiner(mice::combine::CombinerKind::MiceS, 8, 0);
    c.prompt.max_prompts = n;
    c.prompt.selection = selection;
    c
}

pub fn example(doc_id: &str, text: &str, anaphor: &str, antecedents: &[&str]) -> Example {
    let find = |s: &str| {
        let b = text.find(s).unwrap_or_else(|| panic!("{s:?} not in {text:?}"));
        let start = text[..b].chars().count();
        (start, start + s.chars().count())
    };
    let ana_b = text.rfind(anaphor).unwrap();
    let ana_start = text[..ana_b].chars().count();
    let ana = (ana_start, ana_start + anaphor.chars().count());
    let ants: Vec<(usize, usize)> = antecedents.iter().map(|a| find(a)).collect();
    Example::from_offsets(doc_id, text, ana, Some(&ants)).unwrap()
}

// ---- SplitMix64, written out from its published constants ----

pub struct RefRng(pub u64);

impl RefRng {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Rejection sampling in u128 arithmetic.
    pub fn below(&mut self, n: u64) -> u64 {
        let span = 1u128 << 64;
        let limit = span - span % n as u128;
        loop {
            let x = self.next();
            if (x as u128) < limit {
                return x % n;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Indices drawn by a partial Fisher-Yates shuffle of `0..n`.
pub fn reference_kshot(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = RefRng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

// ---- surfaces and tokens ----

pub fn canon(s: &str) -> Option<String> {
    let words: Vec<&str> = s.split_whitespace().collect();
    if words.is_empty() {
        None
    } else {
        Some(words.join(" "))
    }
}

/// First token under the word/punctuation rule: a maximal alphanumeric run,
/// or a single other visible character.
pub fn ref_first_token(s: &str) -> Option<String> {
    let c = canon(s)?;
    let first = c.chars().next()?;
    if first.is_alphanumeric() {
        Some(c.chars().take_while(|ch| ch.is_alphanumeric()).collect())
    } else {
        Some(first.to_string())
    }
}

// ---- mixture oracles ----

/// `Σ_z w_z · max_j P_j(first token of y)`, by explicit loops.
pub fn mice_oracle(preds: &[PromptPrediction], weights: &BTreeMap<usize, f64>) -> BTreeMap<String, f64> {
    let mut universe = BTreeSet::new();
    for p in preds {
        for a in &p.antecedents {
            if let Some(c) = canon(a) {
                universe.insert(c);
            }
        }
    }
    let mut out = BTreeMap::new();
    for y in universe {
        let tok = ref_first_token(&y).unwrap();
        let mut total = 0.0;
        for p in preds {
            let mut best = 0.0f64;
            for slot in &p.slots {
                for (t, &q) in &slot.dist {
                    if t.trim() == tok && q > best {
                        best = q;
                    }
                }
            }
            total += weights[&p.prompt_id] * best;
        }
        if total > 0.0 {
            out.insert(y, total.min(1.0));
        }
    }
    out
}

/// `Σ_z w_z · [y generated by z]`, by explicit loops.
pub fn mice_s_oracle(preds: &[PromptPrediction], weights: &BTreeMap<usize, f64>) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for p in preds {
        let mut seen = BTreeSet::new();
        for a in &p.antecedents {
            if let Some(c) = canon(a) {
                if seen.insert(c.clone()) {
                    *out.entry(c).or_insert(0.0) += weights[&p.prompt_id];
                }
            }
        }
    }
    for v in out.values_mut() {
        *v = v.min(1.0);
    }
    out
}

/// Random predictions over a small surface pool whose members share first
/// tokens in places. At most `max_prompts` prompts and `max_cands` surfaces.
pub fn random_instance(rng: &mut RefRng, max_prompts: usize, max_cands: usize) -> (Vec<PromptPrediction>, BTreeMap<usize, f64>) {
    const POOL: &[&str] = &[
        "water",
        "DCM",
        "sodium hydride",
        "sodium azide",
        "compound 54",
        "THF",
        "brine",
        "(40 mL)",
    ];
    let n_prompts = 1 + rng.below(max_prompts as u64) as usize;
    let n_cands = 1 + rng.below(max_cands as u64) as usize;
    let mut pool: Vec<&str> = POOL.to_vec();
    for i in (1..pool.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        pool.swap(i, j);
    }
    pool.truncate(n_cands);
    let tokens: Vec<String> = pool.iter().map(|s| ref_first_token(s).unwrap()).collect();

    let mut preds = Vec::new();
    let mut raw = Vec::new();
    for z in 0..n_prompts {
        let mut ants: Vec<String> = Vec::new();
        for s in &pool {
            if rng.unit() < 0.5 {
                ants.push(s.to_string());
            }
        }
        let mut slots = Vec::new();
        for j in 0..ants.len() + rng.below(2) as usize {
            let mut dist = BTreeMap::new();
            let mut mass = 0.0;
            for t in &tokens {
                if rng.unit() < 0.6 {
                    let p = rng.unit() * (1.0 - mass) * 0.9;
                    if p > 0.0 {
                        mass += p;
                        dist.insert(t.clone(), p);
                    }
                }
            }
            slots.push(Slot {
                antecedent: j.min(ants.len().saturating_sub(1)),
                dist,
            });
        }
        preds.push(PromptPrediction {
            prompt_id: z,
            antecedents: ants,
            slots,
            degraded: false,
        });
        raw.push(rng.unit() * 4.0 - 2.0);
    }
    let z: f64 = raw.iter().map(|s| s.exp()).sum();
    let weights = raw.iter().enumerate().map(|(i, s)| (i, s.exp() / z)).collect();
    (preds, weights)
}

// ---- metrics oracle ----

/// Micro P/R/F1 from the pooled multiset of (example, surface) pairs.
pub fn micro_oracle(pred: &BTreeMap<String, Vec<String>>, gold: &BTreeMap<String, Vec<String>>) -> (f64, f64, f64) {
    let pairs = |m: &BTreeMap<String, Vec<String>>| -> BTreeSet<(String, String)> {
        m.iter()
            .flat_map(|(k, v)| v.iter().filter_map(|s| canon(s)).map(move |s| (k.clone(), s)))
            .collect()
    };
    let p = pairs(pred);
    let g = pairs(gold);
    let tp = p.iter().filter(|x| g.contains(x)).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { tp / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { tp / g.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

// ---- nucleus oracle ----

/// Smallest prefix of the probability-sorted top-k list whose renormalized
/// mass reaches `top_p`, found by trying every prefix length.
pub fn nucleus_oracle(dist: &[(&str, f64)], top_k: usize, top_p: f64) -> BTreeMap<String, f64> {
    let mut sorted: Vec<(String, f64)> = dist.iter().map(|(t, p)| (t.to_string(), *p)).collect();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    sorted.truncate(top_k);
    let total: f64 = sorted.iter().map(|x| x.1).sum();
    for len in 1..=sorted.len() {
        let mass: f64 = sorted[..len].iter().map(|x| x.1).sum::<f64>() / total;
        if mass >= top_p - 1e-12 {
            let z: f64 = sorted[..len].iter().map(|x| x.1).sum();
            return sorted[..len].iter().map(|(t, p)| (t.clone(), p / z)).collect();
        }
    }
    unreachable!("the full list has mass 1")
}

// ---- filtering inputs ----

pub fn cand(surface: &str, combined: f64, per_prompt: &[(usize, f64)]) -> CandidateAntecedent {
    CandidateAntecedent {
        canonical_surface: surface.to_string(),
        first_token: surface.split_whitespace().next().unwrap_or("").to_string(),
        per_prompt_prob: per_prompt.iter().copied().collect(),
        combined_prob: combined,
    }
}

pub fn random_candidates(seed: u64) -> Vec<CandidateAntecedent> {
    const WORDS: &[&str] = &["a", "b", "c", "water", "(", "40", "mL", ")"];
    let mut rng = RefRng(seed);
    let n = rng.below(9) as usize;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..n {
        let len = 1 + rng.below(4) as usize;
        let s: Vec<&str> = (0..len).map(|_| WORDS[rng.below(WORDS.len() as u64) as usize]).collect();
        let s = s.join(" ");
        if !seen.insert(s.clone()) {
            continue;
        }
        let prompts: Vec<(usize, f64)> = (0..1 + rng.below(3) as usize).map(|z| (z, rng.unit() * 0.2)).collect();
        out.push(cand(&s, rng.unit() * 0.4, &prompts));
    }
    out
}

// ---- distillation ----

pub fn span(text: &str, s: &str) -> Span {
    let b = text.rfind(s).unwrap();
    let start = text[..b].chars().count();
    Span::new(text, start, start + s.chars().count()).unwrap()
}

/// Two records whose CONLL rendering is `tests/fixtures/distill_golden.conll`,
/// deliberately out of document order.
pub fn golden_records() -> Vec<PseudoLabeledRecord> {
    let tok = WordPunctTokenizer;
    let t1 = "Water (5 mL) was added to compound 54. The mixture was stirred.";
    let preds = vec![("compound 54".to_string(), 0.9), ("Water".to_string(), 0.8)];
    let (r1, d1) = build_record("a", t1, &span(t1, "The mixture"), &preds, &tok);
    assert!(d1.is_empty());
    let t2 = "Brine was added. It";
    let (r2, d2) = build_record("b", t2, &span(t2, "It"), &[("ether".to_string(), 0.5)], &tok);
    assert_eq!(d2, vec![("ether".to_string(), DropReason::Unaligned)]);
    vec![r2, r1]
}
