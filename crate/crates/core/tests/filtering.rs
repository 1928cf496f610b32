mod common;

use std::collections::BTreeMap;

use common::{cand, random_candidates};
use mice::combine::{CandidateAntecedent, CombinerKind};
use mice::filter::{filter_and_merge, FilterConfig};
use mice::lm::WordPunctTokenizer;
use proptest::prelude::*;

fn no_thresholds() -> FilterConfig {
    FilterConfig {
        per_prompt_threshold: 0.0,
        combined_threshold: 0.0,
        ..FilterConfig::default()
    }
}

/// Each candidate goes to the longest candidate containing it (itself when
/// none), ties by the smaller surface; survivors keep the max probability.
fn merge_oracle(cands: &[(&str, f64)]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for &(s, p) in cands {
        let mut best = s;
        for &(t, _) in cands {
            if t != s && t.contains(s) {
                let better = t.chars().count() > best.chars().count()
                    || (t.chars().count() == best.chars().count() && t < best);
                if best == s || better {
                    best = t;
                }
            }
        }
        let e = out.entry(best.to_string()).or_insert(0.0);
        *e = e.max(p);
    }
    out
}

#[test]
fn worked_example_merges_into_longer_surface() {
    let cands = [
        cand("CH2CL2", 0.6, &[(0, 0.6)]),
        cand("CH2CL2 (40 mL)", 0.3, &[(1, 0.3)]),
        cand("water", 0.5, &[(0, 0.5)]),
    ];
    let kept = filter_and_merge(&cands, &FilterConfig::default(), &WordPunctTokenizer);
    let surfaces: Vec<&str> = kept.iter().map(|c| c.canonical_surface.as_str()).collect();
    assert_eq!(surfaces, vec!["CH2CL2 (40 mL)", "water"]);
    assert_eq!(kept[0].combined_prob, 0.6);
}

#[test]
fn nested_chain_collapses_to_longest() {
    let raw = [("a", 0.2), ("a b", 0.7), ("a b c", 0.4)];
    let cands: Vec<CandidateAntecedent> = raw.iter().map(|&(s, p)| cand(s, p, &[(0, p)])).collect();
    let kept = filter_and_merge(&cands, &no_thresholds(), &WordPunctTokenizer);
    let got: BTreeMap<String, f64> = kept.iter().map(|c| (c.canonical_surface.clone(), c.combined_prob)).collect();
    assert_eq!(got, merge_oracle(&raw));
    assert_eq!(got, BTreeMap::from([("a b c".to_string(), 0.7)]));
}

#[test]
fn threshold_fixtures() {
    let tok = WordPunctTokenizer;
    let cfg = FilterConfig::default();
    let cases = [
        (cand("x", 0.05, &[(0, 0.9)]), false),
        (cand("x", 0.1, &[(0, 0.9)]), true),
        (cand("x", 0.5, &[(0, 0.019)]), false),
        (cand("x", 0.5, &[(0, 0.02)]), true),
        (cand("x", 0.5, &[(0, 0.01), (1, 0.03)]), true),
        (cand("x", 0.099, &[(0, 0.5)]), false),
    ];
    for (c, keep) in cases {
        let out = filter_and_merge(std::slice::from_ref(&c), &cfg, &tok);
        assert_eq!(!out.is_empty(), keep, "{c:?}");
    }
    let kate = FilterConfig::for_combiner(CombinerKind::Kate);
    assert_eq!(filter_and_merge(&[cand("x", 0.001, &[(0, 0.001)])], &kate, &tok).len(), 1);
}

#[test]
fn length_cut_precedes_merge() {
    let long = format!("water {}", "x ".repeat(300));
    let cands = [cand("water", 0.2, &[(0, 0.2)]), cand(long.trim(), 0.9, &[(0, 0.9)])];
    let kept = filter_and_merge(&cands, &FilterConfig::default(), &WordPunctTokenizer);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].canonical_surface, "water");
    assert_eq!(kept[0].combined_prob, 0.2);
}

proptest! {
    #[test]
    fn filtering_is_idempotent(seed in any::<u64>()) {
        let tok = WordPunctTokenizer;
        let cfg = FilterConfig::default();
        let once = filter_and_merge(&random_candidates(seed), &cfg, &tok);
        let twice = filter_and_merge(&once, &cfg, &tok);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn merge_matches_reference(seed in any::<u64>()) {
        let cands = random_candidates(seed);
        let raw: Vec<(&str, f64)> = cands.iter().map(|c| (c.canonical_surface.as_str(), c.combined_prob)).collect();
        let kept = filter_and_merge(&cands, &no_thresholds(), &WordPunctTokenizer);
        let got: BTreeMap<String, f64> = kept.iter().map(|c| (c.canonical_surface.clone(), c.combined_prob)).collect();
        prop_assert_eq!(got, merge_oracle(&raw));
    }

    #[test]
    fn survivors_clear_both_thresholds(seed in any::<u64>()) {
        let cfg = FilterConfig::default();
        for c in filter_and_merge(&random_candidates(seed), &cfg, &WordPunctTokenizer) {
            prop_assert!(c.combined_prob >= cfg.combined_threshold);
            prop_assert!(c.max_per_prompt() >= cfg.per_prompt_threshold);
        }
    }
}
