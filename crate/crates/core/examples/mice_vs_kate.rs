//! MICE-S with many experts against single-prompt KATE on the bundled
//! synthetic corpus, using the noisy-oracle mock: each expert is right more
//! often when its demonstrations resemble the test input. Experts are kept
//! either by gate score ("top") or drawn uniformly ("random").
//!
//! ```text
//! cargo run --release --example mice_vs_kate
//! ```

use std::sync::Arc;

use mice::lm::NoisyOracleConfig;
use mice::prelude::*;
use mice::synthetic::{bundled_test, bundled_train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = bundled_train();
    let test = bundled_test();
    let tokenizer: Arc<dyn Tokenizer> = Arc::new(WordPunctTokenizer);
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let oracle = NoisyOracle::new(
        NoisyOracleConfig::default(),
        &[&train, &test],
        embedder.clone(),
        tokenizer.clone(),
        Template::default(),
    );
    let resolver = Resolver::new(tokenizer, embedder, Arc::new(oracle), 8)?;
    let seeds = [1, 2, 3, 4, 5];

    for (name, config) in [
        ("kate", RunConfig::for_combiner(CombinerKind::Kate, 8, 0)),
        ("mice-s, 4 top", with_experts(4, Selection::TopGated)),
        ("mice-s, 16 top", with_experts(16, Selection::TopGated)),
        ("mice-s, 4 random", with_experts(4, Selection::SeededRandom)),
        ("mice-s, 16 random", with_experts(16, Selection::SeededRandom)),
        ("mice-s, 64", with_experts(64, Selection::TopGated)),
        ("mice, 64", {
            let mut c = with_experts(64, Selection::TopGated);
            c.combiner = CombinerKind::Mice;
            c
        }),
    ] {
        let (report, _) = resolver.run_seeds(&config, &train, &test, &seeds)?;
        let per_seed: Vec<String> = report.runs.iter().map(|r| format!("{:.3}", r.score.f1)).collect();
        println!(
            "{name:<20} mean F1 {:.4} (std {:.4})  per seed [{}]",
            report.mean_f1,
            report.std_f1,
            per_seed.join(", ")
        );
    }
    println!("{} backend requests", resolver.requests());
    Ok(())
}

/// With k = 8 there are 64 ordered pairs, so 64 experts is the whole
/// universe under either selection.
fn with_experts(n: usize, selection: Selection) -> RunConfig {
    let mut c = RunConfig::for_combiner(CombinerKind::MiceS, 8, 0);
    c.prompt.max_prompts = n;
    c.prompt.selection = selection;
    c
}
