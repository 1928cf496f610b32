//! Prompt enumeration and similarity gating for one test input: every
//! ordered pair of demonstrations from an 8-shot sample, ranked by summed
//! cosine similarity, with the softmax gate over the kept prompts.
//!
//! ```text
//! cargo run --example build_prompts
//! ```

use std::collections::HashMap;
use std::sync::Arc;

use mice::prelude::*;
use mice::similarity::{cosine, gate};
use mice::synthetic::{bundled_test, bundled_train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = bundled_train();
    let test = &bundled_test().examples[0];
    let sample = sample_kshot(&train, 8, 1)?;
    let embedder = HashingEmbedder::default();
    let builder = PromptBuilder::new(
        Template::default(),
        Arc::new(WordPunctTokenizer),
        PromptSetConfig {
            max_prompts: 6,
            ..Default::default()
        },
    );

    let test_emb = embedder.embed(&builder.query_text(test))?;
    let mut demo_embs = HashMap::new();
    let mut sims = Vec::new();
    for d in &sample.examples {
        let e = embedder.embed(&builder.query_text(d))?;
        sims.push(cosine(&test_emb, &e)?);
        demo_embs.insert(d.key(), e);
    }
    for (d, s) in sample.examples.iter().zip(&sims) {
        println!("sim {s:.3}  {}", d.key());
    }

    let prompts = builder.enumerate_prompts(&sample, test, &sims)?;
    let gating = gate(&test_emb, &prompts, &demo_embs, GateCombine::Sum)?;
    println!();
    for p in &prompts {
        println!(
            "prompt {}  demos {:?}  {} tokens  weight {:.3}",
            p.prompt_id,
            p.demo_indices,
            p.token_count,
            gating.weight(p.prompt_id)
        );
    }
    println!("\n--- prompt 0 ---\n{}", prompts[0].rendered);
    Ok(())
}
