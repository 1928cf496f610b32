//! Nucleus sampling as used by KATE+: the top-k / top-p nucleus of a token
//! distribution and the empirical frequencies of seeded draws from it.
//!
//! ```text
//! cargo run --example kate_plus_sampling
//! ```

use std::collections::BTreeMap;

use mice::lm::{nucleus_set, sample_nucleus};
use mice::rng::SplitMix64;

fn main() {
    let dist = [("water", 0.7), ("DCM", 0.27), ("THF", 0.03)];
    let nucleus = nucleus_set(&dist, 50, 0.95, 1.0);
    println!("nucleus (top_k 50, top_p 0.95): {nucleus:?}");

    let mut rng = SplitMix64::new(7);
    let n = 10_000;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..n {
        if let Some(t) = sample_nucleus(&dist, 50, 0.95, 1.0, &mut rng) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut tv = 0.0;
    for (tok, p) in &nucleus {
        let f = counts.get(tok).copied().unwrap_or(0) as f64 / n as f64;
        tv += (f - p).abs();
        println!("{tok:<6} expected {p:.4}  observed {f:.4}");
    }
    println!("total variation {:.4}", tv / 2.0);
}
