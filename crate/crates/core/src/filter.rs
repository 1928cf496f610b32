//! Final antecedent selection: length cut, substring merge, thresholds.

use serde::{Deserialize, Serialize};

use crate::combine::{sort_candidates, CandidateAntecedent, CombinerKind};
use crate::lm::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub max_len_tokens: usize,
    pub per_prompt_threshold: f64,
    pub combined_threshold: f64,
    pub merge_substrings: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_len_tokens: 250,
            per_prompt_threshold: 0.02,
            combined_threshold: 0.1,
            merge_substrings: true,
        }
    }
}

impl FilterConfig {
    /// Thresholds per combiner: KATE keeps everything it generates, the
    /// ensembles use 0.02 / 0.1.
    pub fn for_combiner(kind: CombinerKind) -> Self {
        match kind {
            CombinerKind::Kate => Self {
                per_prompt_threshold: 0.0,
                combined_threshold: 0.0,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("per-prompt threshold", self.per_prompt_threshold),
            ("combined threshold", self.combined_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.max_len_tokens < 1 {
            return Err("max antecedent length must be at least 1 token".into());
        }
        Ok(())
    }
}

/// Applies, in order:
/// 1. drop candidates longer than `max_len_tokens`;
/// 2. absorb every candidate that is a substring of another into the
///    longest candidate containing it (ties by surface), keeping the max
///    combined probability and the per-prompt maxima;
/// 3. drop candidates whose largest `P(y|z,x)` is below `per_prompt_threshold`;
/// 4. drop candidates whose `P(y|x)` is below `combined_threshold`.
pub fn filter_and_merge(
    candidates: &[CandidateAntecedent],
    config: &FilterConfig,
    tokenizer: &dyn Tokenizer,
) -> Vec<CandidateAntecedent> {
    let kept: Vec<CandidateAntecedent> = candidates
        .iter()
        .filter(|c| tokenizer.count(&c.canonical_surface) <= config.max_len_tokens)
        .cloned()
        .collect();

    let mut merged = if config.merge_substrings {
        merge_substrings(kept)
    } else {
        kept
    };

    merged.retain(|c| c.max_per_prompt() >= config.per_prompt_threshold && c.combined_prob >= config.combined_threshold);
    sort_candidates(&mut merged);
    merged
}

fn merge_substrings(cands: Vec<CandidateAntecedent>) -> Vec<CandidateAntecedent> {
    let n = cands.len();
    let len = |c: &CandidateAntecedent| c.canonical_surface.chars().count();
    let mut target: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        target[i] = (0..n)
            .filter(|&j| {
                j != i
                    && cands[j].canonical_surface != cands[i].canonical_surface
                    && cands[j].canonical_surface.contains(cands[i].canonical_surface.as_str())
            })
            .max_by(|&a, &b| {
                len(&cands[a])
                    .cmp(&len(&cands[b]))
                    .then_with(|| cands[b].canonical_surface.cmp(&cands[a].canonical_surface))
            });
    }
    let mut out: Vec<CandidateAntecedent> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        if target[i].is_none() {
            slot[i] = out.len();
            out.push(cands[i].clone());
        }
    }
    for i in 0..n {
        if let Some(t) = target[i] {
            // The longest superstring contains no longer superstring, so it
            // always survives.
            let survivor = &mut out[slot[t]];
            survivor.combined_prob = survivor.combined_prob.max(cands[i].combined_prob);
            for (&z, &p) in &cands[i].per_prompt_prob {
                let e = survivor.per_prompt_prob.entry(z).or_insert(0.0);
                *e = e.max(p);
            }
        }
    }
    out
}
