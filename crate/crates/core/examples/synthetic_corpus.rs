//! Generates a synthetic cover corpus and writes it out as PNGs.
//!
//! `cargo run --example synthetic_corpus -- [out_dir] [count]`

use std::path::PathBuf;

use stcl::data::{save_png, synth_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_covers".into()));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let corpus = synth_corpus(n, (32, 32), 0)?;
    std::fs::create_dir_all(&out)?;
    for s in &corpus.samples {
        let family = s.family.map_or("file", |f| f.name());
        save_png(&s.image, &out.join(format!("{}_{family}.png", s.id)))?;
    }
    println!(
        "wrote {} covers to {} (train {}, val {}, test {})",
        corpus.len(),
        out.display(),
        corpus.split.train.len(),
        corpus.split.val.len(),
        corpus.split.test.len()
    );
    Ok(())
}
