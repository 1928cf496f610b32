//! Rule-based anaphor detection, on one snippet and on the bundled
//! hand-labeled fixture.
//!
//! ```text
//! cargo run --example detect_anaphors
//! ```

use mice::anaphor::{detect_anaphors, evaluate_detection, RuleSet};
use mice::corpus::Span;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rules = RuleSet::default_rules();
    let text = "Compound 12 (1.0 g) and K2CO3 (2.1 g) were suspended in DMF. \
                The reaction mixture was stirred for 3 h, then the resulting solution was concentrated.";
    println!("{text}\n");
    for span in detect_anaphors(text, &rules) {
        println!("  [{:>3}, {:>3})  {}", span.start, span.end, span.surface);
    }

    let fixture = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/detection_fixture.jsonl"))?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for line in fixture.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        let t = v["text"].as_str().unwrap_or_default();
        let gold: Vec<Span> = v["anaphors"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|a| Span::new(t, a["start"].as_u64()? as usize, a["end"].as_u64()? as usize))
            .collect();
        let r = evaluate_detection(&detect_anaphors(t, &rules), &gold);
        tp += r.true_positives;
        fp += r.false_positives;
        fn_ += r.false_negatives;
    }
    let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    println!("\nfixture: tp {tp}, fp {fp}, fn {fn_}, F1 {f1:.4}");
    Ok(())
}
