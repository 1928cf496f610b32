mod common;

use std::sync::Arc;

use common::*;
use mice::anaphor::RuleSet;
use mice::combine::CombinerKind;
use mice::corpus::{sample_kshot, Span};
use mice::distill::*;
use mice::lm::mock::MockResponse;
use mice::lm::{ScriptedBackend, Tokenizer, WordPunctTokenizer};
use mice::pipeline::{Resolver, RunConfig};
use mice::prompt::Template;
use mice::similarity::HashingEmbedder;
use proptest::prelude::*;

fn words(s: &str) -> Vec<String> {
    WordPunctTokenizer
        .tokenize(s)
        .into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

#[test]
fn conll_matches_golden() {
    let mut buf = Vec::new();
    export_records(&golden_records(), &mut buf, ExportFormat::Conll).unwrap();
    let want = std::fs::read_to_string(fixture_path("distill_golden.conll")).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), want);
}

#[test]
fn jsonl_round_trips() {
    let records = golden_records();
    let mut buf = Vec::new();
    export_records(&records, &mut buf, ExportFormat::Jsonl).unwrap();
    let back = load_records(buf.as_slice()).unwrap();
    assert_eq!(back, vec![records[1].clone(), records[0].clone()]);
    let r = &back[0];
    assert_eq!(r.runs.len(), 2);
    assert_eq!(r.runs[0].surface, "Water");
    assert_eq!(r.runs[1].confidence, 0.9);
}

#[test]
fn repeated_surface_aligns_to_nearest_occurrence() {
    let t = "Water was added. Then water was removed and water was added again. The mixture was cooled.";
    let (r, _) = build_record("w", t, &span(t, "The mixture"), &[("water".to_string(), 0.7)], &WordPunctTokenizer);
    let bs: Vec<usize> = r.tags.iter().enumerate().filter(|(_, t)| **t == Tag::B).map(|(i, _)| i).collect();
    assert_eq!(bs.len(), 1);
    assert_eq!(r.tokens[bs[0]], "water");
    assert_eq!(r.tokens[bs[0] + 1], "was");
    assert_eq!(r.tokens[bs[0] + 2], "added");
    assert_eq!(r.tokens[bs[0] + 3], "again");
}

#[test]
fn pseudo_labels_from_a_scripted_teacher() {
    let docs = load_unlabeled(data_path("synthetic_unlabeled.jsonl")).unwrap();
    let (train, _) = bundled();
    let tok = tokenizer();
    let backend = ScriptedBackend::scripted(
        vec![],
        MockResponse {
            answer: Some("water".into()),
            ..Default::default()
        },
        tok.clone(),
        Template::default(),
    );
    let resolver = Resolver::new(tok, Arc::new(HashingEmbedder::default()), Arc::new(backend), 2).unwrap();
    let cfg = RunConfig::for_combiner(CombinerKind::Kate, 4, 0);
    let sample = sample_kshot(&train, 4, 0).unwrap();
    let rules = RuleSet::default_rules();
    let (records, manifest) = generate_pseudo_labels(&docs, &resolver, &cfg, &sample, &rules, 10, 3).unwrap();
    assert_eq!(records.len(), 10);
    assert_eq!(manifest.exported, 10);
    assert!(manifest.detected >= 10);
    let mut prev = None;
    for r in &records {
        r.validate().unwrap();
        let key = (r.doc_id.clone(), r.anaphor.start);
        assert!(prev.as_ref() < Some(&key));
        prev = Some(key);
        let ana = r.tokens.iter().position(|t| t == ANA_START).unwrap();
        for run in &r.runs {
            assert!(run.end <= ana);
            assert_eq!(r.tokens[run.start..run.end].join(" ").to_lowercase(), "water");
        }
    }
    for d in &manifest.dropped_surfaces {
        assert_eq!(d.reason, DropReason::Unaligned);
    }
    let again = generate_pseudo_labels(&docs, &resolver, &cfg, &sample, &rules, 10, 3).unwrap();
    assert_eq!(again.0, records);
}

#[test]
fn too_few_anaphors_is_an_error() {
    let docs = vec![UnlabeledDoc {
        doc_id: "d".into(),
        text: "Water was added. The mixture was stirred.".into(),
    }];
    let (train, test) = bundled();
    let resolver = echo_resolver(&test, 1);
    let cfg = RunConfig::for_combiner(CombinerKind::Kate, 2, 0);
    let sample = sample_kshot(&train, 2, 0).unwrap();
    let err = generate_pseudo_labels(&docs, &resolver, &cfg, &sample, &RuleSet::default_rules(), 5, 0).unwrap_err();
    assert!(matches!(err, DistillError::NotEnoughAnaphors { requested: 5, available: 1 }));
}

fn doc_words() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(vec!["water", "DCM", "compound", "54", "(", ")", "was", "added", "."]), 1..30)
}

proptest! {
    #[test]
    fn nearest_occurrence_matches_scan(hay in doc_words(), needle in doc_words(), limit_frac in 0.0f64..=1.0) {
        let hay: Vec<String> = hay.into_iter().map(String::from).collect();
        let needle: Vec<String> = needle.into_iter().take(3).map(String::from).collect();
        let limit = (hay.len() as f64 * limit_frac) as usize;
        let mut want = None;
        for s in 0..hay.len() {
            if s + needle.len() <= limit && hay[s..s + needle.len()] == needle[..] {
                want = Some(s);
            }
        }
        prop_assert_eq!(nearest_occurrence(&hay, &needle, limit), want);
    }

    #[test]
    fn records_are_well_formed(
        ws in doc_words(),
        ana_len in 1usize..3,
        ana_frac in 0.0f64..=1.0,
        picks in prop::collection::vec((0usize..40, 1usize..4, 0.0f64..1.0), 0..6),
    ) {
        let text = ws.join(" ");
        let tok = WordPunctTokenizer;
        // Anaphor over whole words.
        let n = ws.len();
        let a0 = ((n as f64 * ana_frac) as usize).min(n - 1);
        let a1 = (a0 + ana_len).min(n);
        let char_at = |w: usize| ws[..w].iter().map(|s| s.chars().count() + 1).sum::<usize>();
        let anaphor = Span::new(&text, char_at(a0), char_at(a1) - 1).unwrap();
        let preds: Vec<(String, f64)> = picks
            .iter()
            .map(|&(s, l, c)| {
                let s = s % n;
                (ws[s..(s + l).min(n)].join(" "), c)
            })
            .collect();
        let (r, dropped) = build_record("p", &text, &anaphor, &preds, &tok);
        prop_assert!(r.validate().is_ok(), "{:?}", r.validate());
        prop_assert_eq!(r.tokens.len(), words(&text).len() + 2);
        let ana = r.tokens.iter().position(|t| t == ANA_START).unwrap();
        let mut covered = vec![false; r.tokens.len()];
        for run in &r.runs {
            prop_assert!(run.end <= ana);
            prop_assert_eq!(&r.tokens[run.start..run.end], &words(&run.surface)[..]);
            for c in &mut covered[run.start..run.end] {
                prop_assert!(!*c);
                *c = true;
            }
        }
        prop_assert_eq!(r.runs.len() + dropped.len(), preds.len());
        let tagged = r.tags.iter().filter(|t| **t != Tag::O).count();
        prop_assert_eq!(tagged, covered.iter().filter(|c| **c).count());
    }
}
