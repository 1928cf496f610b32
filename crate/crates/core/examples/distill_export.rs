//! Pseudo-labels anaphors in the bundled unlabeled protocols with a
//! scripted teacher and prints the first records in CONLL form.
//!
//! ```text
//! cargo run --example distill_export
//! ```

use std::sync::Arc;

use mice::distill::{export_records, generate_pseudo_labels, load_unlabeled, ExportFormat};
use mice::lm::mock::MockResponse;
use mice::prelude::*;
use mice::synthetic::bundled_train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs = load_unlabeled(concat!(env!("CARGO_MANIFEST_DIR"), "/data/synthetic_unlabeled.jsonl"))?;
    let train = bundled_train();
    let tokenizer: Arc<dyn Tokenizer> = Arc::new(WordPunctTokenizer);
    let teacher = ScriptedBackend::scripted(
        vec![],
        MockResponse {
            answer: Some("water | DMF | ethyl acetate".into()),
            ..Default::default()
        },
        tokenizer.clone(),
        Template::default(),
    );
    let resolver = Resolver::new(tokenizer, Arc::new(HashingEmbedder::default()), Arc::new(teacher), 4)?;
    let config = RunConfig::for_combiner(CombinerKind::Kate, 4, 0);
    let sample = sample_kshot(&train, 4, 0)?;
    let (records, manifest) =
        generate_pseudo_labels(&docs, &resolver, &config, &sample, &RuleSet::default_rules(), 8, 1)?;
    eprintln!(
        "{} detected, {} exported, {} surfaces dropped",
        manifest.detected,
        manifest.exported,
        manifest.dropped_surfaces.len()
    );
    export_records(&records[..2], std::io::stdout().lock(), ExportFormat::Conll)?;
    Ok(())
}
