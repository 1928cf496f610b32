//! Regenerates the synthetic corpora bundled under `data/`.
//!
//! ```text
//! cargo run --example generate_synthetic_corpus -- [output-dir]
//! ```

use std::io::Write;
use std::path::PathBuf;

use mice::synthetic::{bundled_test, bundled_train, bundled_unlabeled};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    std::fs::create_dir_all(&dir)?;

    for set in [bundled_train(), bundled_test()] {
        let path = dir.join(format!("{}.jsonl", set.split_name));
        set.save(&path)?;
        let antecedents: usize = set.examples.iter().map(|e| e.gold_antecedents.as_ref().map_or(0, Vec::len)).sum();
        println!("{}: {} anaphors, {} antecedents", path.display(), set.len(), antecedents);
    }

    let docs = bundled_unlabeled();
    let path = dir.join("synthetic_unlabeled.jsonl");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for d in &docs {
        writeln!(f, "{}", serde_json::to_string(d)?)?;
    }
    f.flush()?;
    println!("{}: {} documents", path.display(), docs.len());

    let first = &bundled_train().examples[0];
    println!("\nfirst training example:\n  {}", first.text);
    println!("  anaphor: {:?}", first.anaphor.surface);
    for a in first.gold_antecedents.iter().flatten() {
        println!("  antecedent: {:?}", a.surface);
    }
    Ok(())
}
