//! Trains a teacher ladder, scores every cover under each teacher and sorts
//! the corpus into Easy, Medium and Hard.

use stcl::data::synth_corpus;
use stcl::difficulty::{partition, Label, TeacherLadder, Thresholds};
use stcl::model::{ModelConfig, TrainConfig};

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[((v.len() - 1) as f64 * q).round() as usize]
}

fn main() -> stcl::Result<()> {
    let model = ModelConfig {
        image_size: (16, 16),
        encoder_layers: 3,
        decoder_layers: 2,
        hidden_channels: 8,
        ..ModelConfig::default()
    };
    let corpus = synth_corpus(40, model.image_size, 0)?;
    let ladder = TeacherLadder::train(&corpus, &model, &TrainConfig::default(), &[2, 5, 10], 20)?;
    println!("ladder {:?} fingerprint {}", ladder.budgets, ladder.fingerprint());

    // score once with permissive cutoffs, then pick cutoffs from the scores
    let loose = Thresholds { alpha1: 0.0, alpha2: -1.0, mu1: 0.0, mu2: -1.0 };
    let scored = partition(&corpus, &ladder.teachers, &ladder.fingerprint(), &loose, 3, 1)?;
    let weakest = |f: fn(&stcl::difficulty::SampleScores) -> f64| -> Vec<f64> {
        scored.entries.iter().map(|e| f(&e.scores)).collect()
    };
    let s = weakest(|s| s.ssim.iter().cloned().fold(f64::INFINITY, f64::min));
    let p = weakest(|s| s.psnr.iter().cloned().fold(f64::INFINITY, f64::min));
    let th = Thresholds {
        alpha1: quantile(s.clone(), 0.6),
        alpha2: quantile(s, 0.15),
        mu1: quantile(p.clone(), 0.6),
        mu2: quantile(p, 0.15),
    };
    let manifest = scored.relabel(&th)?;
    println!("cutoffs ssim {:.3}/{:.3} psnr {:.2}/{:.2}", th.alpha1, th.alpha2, th.mu1, th.mu2);
    println!("subsets: {}", manifest.sizes());
    for label in Label::ALL {
        let mut fams = std::collections::BTreeMap::<&str, usize>::new();
        for (e, s) in manifest.entries.iter().zip(&corpus.samples) {
            if e.label == label {
                *fams.entry(s.family.map_or("file", |f| f.name())).or_default() += 1;
            }
        }
        println!("  {label}: {fams:?}");
    }
    Ok(())
}
