mod common;

use std::collections::BTreeMap;

use common::*;
use mice::anaphor::{detect_anaphors, evaluate_detection, RuleSet};
use mice::corpus::Span;
use mice::metrics::micro_f1;
use proptest::prelude::*;

const PATTERNS: &[&str] = &["the reaction", "the reaction solution", "reaction solution", "the mixture", "mixture"];

/// Every case-insensitive occurrence of every pattern at word boundaries.
fn all_occurrences(text: &str) -> Vec<(usize, usize)> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let word = |i: usize| chars.get(i).is_some_and(|c| c.is_alphanumeric() || *c == '_');
    let mut out = Vec::new();
    for p in PATTERNS {
        let pc: Vec<char> = p.chars().collect();
        for s in 0..chars.len() {
            let e = s + pc.len();
            if e <= chars.len()
                && chars[s..e] == pc[..]
                && (s == 0 || !word(s - 1))
                && !word(e)
            {
                out.push((s, e));
            }
        }
    }
    out
}

#[test]
fn longer_match_wins_over_nested_one() {
    let rules = RuleSet::new(PATTERNS.iter().copied(), false).unwrap();
    let text = "Then the reaction solution was cooled and the mixture filtered.";
    let found = detect_anaphors(text, &rules);
    let got: Vec<&str> = found.iter().map(|s| s.surface.as_str()).collect();
    assert_eq!(got, vec!["the reaction solution", "the mixture"]);
}

#[test]
fn bundled_fixture_scores() {
    let rules = RuleSet::default_rules();
    let text = std::fs::read_to_string(data_path("detection_fixture.jsonl")).unwrap();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut docs = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let t = v["text"].as_str().unwrap();
        let gold: Vec<Span> = v["anaphors"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| Span::new(t, a["start"].as_u64().unwrap() as usize, a["end"].as_u64().unwrap() as usize).unwrap())
            .collect();
        let r = evaluate_detection(&detect_anaphors(t, &rules), &gold);
        tp += r.true_positives;
        fp += r.false_positives;
        fn_ += r.false_negatives;
        docs += 1;
    }
    assert_eq!(docs, 50);
    assert_eq!(tp + fn_, 65);
    let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    assert!(f1 >= 0.95, "tp {tp} fp {fp} fn {fn_}");
}

fn texts() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["the", "The", "reaction", "solution", "mixture", "was", "stirred", ",", "."]),
        0..16,
    )
    .prop_map(|ws| ws.join(" "))
}

proptest! {
    #[test]
    fn detections_are_maximal_and_disjoint(text in texts()) {
        let rules = RuleSet::new(PATTERNS.iter().copied(), false).unwrap();
        let found: Vec<(usize, usize)> = detect_anaphors(&text, &rules).iter().map(|s| (s.start, s.end)).collect();
        let raw = all_occurrences(&text);
        for w in found.windows(2) {
            prop_assert!(w[0].1 <= w[1].0, "{:?}", found);
        }
        for f in &found {
            prop_assert!(raw.contains(f));
        }
        // Every raw match was either kept or lost to an overlapping match at
        // least as long.
        for &(s, e) in &raw {
            let covered = found.iter().any(|&(fs, fe)| (fs, fe) == (s, e) || (fs < e && s < fe && fe - fs >= e - s));
            prop_assert!(covered, "{:?} not accounted for in {:?}", (s, e), found);
        }
    }

    #[test]
    fn micro_f1_matches_pooled_counts(seed in any::<u64>()) {
        const POOL: &[&str] = &["water", " water ", "DCM", "compound 54", "compound  54", "THF", "brine"];
        let mut rng = RefRng(seed);
        let n = rng.below(6) as usize;
        let mut pred = BTreeMap::new();
        let mut gold = BTreeMap::new();
        for i in 0..n {
            let pick = |rng: &mut RefRng| -> Vec<String> {
                (0..rng.below(4)).map(|_| POOL[rng.below(POOL.len() as u64) as usize].to_string()).collect()
            };
            pred.insert(format!("doc{i}:0-1"), pick(&mut rng));
            gold.insert(format!("doc{i}:0-1"), pick(&mut rng));
        }
        let r = micro_f1(&pred, &gold).unwrap();
        let (p, rc, f) = micro_oracle(&pred, &gold);
        prop_assert!((r.precision - p).abs() < 1e-15);
        prop_assert!((r.recall - rc).abs() < 1e-15);
        prop_assert!((r.f1 - f).abs() < 1e-15);
    }
}
