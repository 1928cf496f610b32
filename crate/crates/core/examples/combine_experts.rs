//! The combiners on hand-built expert outputs, followed by candidate
//! filtering.
//!
//! ```text
//! cargo run --example combine_experts
//! ```

use std::collections::BTreeMap;

use mice::combine::{combine_mice, combine_mice_sample, combine_product, PromptPrediction, Slot};
use mice::prelude::*;

fn expert(id: usize, answers: &[&str], first_tokens: &[&[(&str, f64)]]) -> PromptPrediction {
    PromptPrediction {
        prompt_id: id,
        antecedents: answers.iter().map(|s| s.to_string()).collect(),
        slots: first_tokens
            .iter()
            .enumerate()
            .map(|(j, d)| Slot {
                antecedent: j,
                dist: d.iter().map(|(t, p)| (t.to_string(), *p)).collect::<BTreeMap<_, _>>(),
            })
            .collect(),
        degraded: false,
    }
}

fn show(name: &str, cands: &[CandidateAntecedent]) {
    let parts: Vec<String> = cands
        .iter()
        .map(|c| format!("{} {:.4}", c.canonical_surface, c.combined_prob))
        .collect();
    println!("{name:<8} {}", parts.join(", "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tok = WordPunctTokenizer;
    let experts = [
        expert(0, &["CH2CL2", "water"], &[&[("CH2CL2", 0.6)], &[("water", 0.7)]]),
        expert(1, &["CH2CL2 (40 mL)"], &[&[("CH2CL2", 0.3)]]),
        expert(2, &["water", "THF"], &[&[("water", 0.8)], &[("THF", 0.05)]]),
    ];
    let gating = GatingDistribution::softmax(&[(0, 1.4), (1, 0.9), (2, 1.1)])?;
    println!("gating {:?}\n", gating.weights);

    let mice = combine_mice(&experts, &gating, &tok)?;
    show("mice", &mice);
    show("mice-s", &combine_mice_sample(&experts, &gating, &tok)?);
    show("product", &combine_product(&experts, 1e-4, &tok)?);

    let kept = filter_and_merge(&mice, &FilterConfig::default(), &tok);
    println!();
    show("kept", &kept);
    Ok(())
}
