//! Writes a run manifest, reads it back and replays it. Replay recomputes
//! every final set from the recorded predictions and gating without a
//! backend.
//!
//! ```text
//! cargo run --example replay_manifest
//! ```

use mice::lm::NoisyOracleConfig;
use mice::pipeline::{read_manifests, write_manifests};
use mice::prelude::*;
use mice::synthetic::{bundled_test, bundled_train};
use std::sync::Arc;

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
    let resolver = Resolver::new(tokenizer, embedder, Arc::new(oracle), 4)?;
    let mut config = RunConfig::for_combiner(CombinerKind::Mice, 8, 0);
    config.prompt.max_prompts = 32;
    let (report, manifests) = resolver.run_seeds(&config, &train, &test, &[1, 2])?;
    println!("live:     mean F1 {:.4}, {} requests", report.mean_f1, resolver.requests());

    let path = std::env::temp_dir().join("mice_replay_example.jsonl");
    write_manifests(&path, &manifests)?;
    let loaded = read_manifests(&path)?;
    let replayed = loaded
        .iter()
        .map(|m| replay(m, &WordPunctTokenizer))
        .collect::<Result<Vec<_>, _>>()?;
    let again = RunReport::from_manifests(&replayed)?;
    println!("replayed: mean F1 {:.4}, {} requests", again.mean_f1, resolver.requests());
    println!("manifest: {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
