//! Full easy-to-hard run on a small synthetic corpus: teacher ladder,
//! partition, three knee-gated stages, and a same-budget baseline.

use stcl::cli::evaluate_split;
use stcl::data::synth_corpus;
use stcl::difficulty::{partition, SampleScores, TeacherLadder, Thresholds};
use stcl::knee::KneeParams;
use stcl::metrics::MetricReport;
use stcl::model::{ModelConfig, TrainConfig};
use stcl::schedule::{run_baseline, run_curriculum, CurriculumPlan, StopRule};

fn main() -> stcl::Result<()> {
    let model = ModelConfig {
        image_size: (16, 16),
        encoder_layers: 4,
        decoder_layers: 3,
        hidden_channels: 8,
        ..ModelConfig::default()
    };
    let train = TrainConfig::default();
    let corpus = synth_corpus(60, model.image_size, 0)?;
    let ladder = TeacherLadder::train(&corpus, &model, &train, &[3, 8], 16)?;
    let loose = Thresholds { alpha1: 0.0, alpha2: -1.0, mu1: 0.0, mu2: -1.0 };
    let scored = partition(&corpus, &ladder.teachers, &ladder.fingerprint(), &loose, 0, model.payload_depth)?;
    // roughly a third Easy, a sixth Hard, judged by each cover's weakest teacher
    let weakest = |f: fn(&SampleScores) -> &Vec<f64>| -> Vec<f64> {
        let mut v: Vec<f64> = scored.entries.iter().map(|e| f(&e.scores).iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    };
    let (s, p) = (weakest(|s| &s.ssim), weakest(|s| &s.psnr));
    let at = |v: &[f64], q: f64| v[((v.len() - 1) as f64 * q) as usize];
    let th = Thresholds { alpha1: at(&s, 0.5), alpha2: at(&s, 0.17), mu1: at(&p, 0.5), mu2: at(&p, 0.17) };
    let manifest = scored.relabel(&th)?;
    println!("subsets: {}", manifest.sizes());

    let knee = KneeParams { smoothing_window: 3, sensitivity: 1.0, min_epochs: 3 };
    let plan = CurriculumPlan::three_stage(knee, [12, 12, 16], StopRule::converge_default(), 40);
    let run = run_curriculum(&corpus, &manifest, &plan, &model, &train)?;
    for r in &run.reports {
        let how = r.triggered_by.map_or("-".to_string(), |t| t.to_string());
        println!("stage {}: {} epochs, stopped by {how}, knee {:?}", r.stage, r.epochs, r.knee_epoch);
    }
    let base = run_baseline(&corpus, &model, &train, run.epochs())?;

    let test = |net| -> stcl::Result<MetricReport> {
        let r: Vec<MetricReport> = evaluate_split(net, &corpus, &corpus.split.test, 0)?.into_iter().map(|(m, _)| m).collect();
        Ok(MetricReport::mean(&r))
    };
    let (c, b) = (test(&run.net)?, test(&base.net)?);
    println!("after {} epochs each:", run.epochs());
    println!("  curriculum  psnr {:.2} ssim {:.4} acc {:.3}", c.psnr, c.ssim, c.accuracy);
    println!("  baseline    psnr {:.2} ssim {:.4} acc {:.3}", b.psnr, b.ssim, b.accuracy);
    Ok(())
}
