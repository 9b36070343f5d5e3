//! Trains the residual-filter detector to tell covers from stego images
//! made by a briefly trained embedder, then scores held-out images.

use stcl::cli::evaluate_split;
use stcl::data::{synth_corpus, Image};
use stcl::model::{ModelConfig, TrainConfig};
use stcl::schedule::run_baseline;
use stcl::steganalysis::{score_corpus, train_detector, DetectorConfig};

fn main() -> stcl::Result<()> {
    let model = ModelConfig {
        image_size: (16, 16),
        encoder_layers: 3,
        decoder_layers: 2,
        hidden_channels: 8,
        ..ModelConfig::default()
    };
    let corpus = synth_corpus(60, model.image_size, 0)?;
    let embedder = run_baseline(&corpus, &model, &TrainConfig::default(), 10)?.net;

    let stegos = |idx: &[usize]| -> stcl::Result<Vec<Image>> {
        Ok(evaluate_split(&embedder, &corpus, idx, 0)?.into_iter().map(|(_, s)| s).collect())
    };
    let train_stegos = stegos(&corpus.split.train)?;
    let cfg = DetectorConfig { epochs: 20, ..DetectorConfig::default() };
    let trained = train_detector(&corpus.images(&corpus.split.train), &train_stegos.iter().collect::<Vec<_>>(), &cfg)?;
    println!("holdout accuracy {:.3}", trained.holdout_accuracy);

    let test = &corpus.split.test;
    let ids: Vec<String> = test.iter().map(|&i| corpus.samples[i].id.clone()).collect();
    let test_stegos = stegos(test)?;
    let covers = score_corpus(&trained.detector, &ids, &corpus.images(test))?;
    let marked = score_corpus(&trained.detector, &ids, &test_stegos.iter().collect::<Vec<_>>())?;
    println!("mean stego probability: covers {:.3}, stegos {:.3}", covers.mean, marked.mean);
    Ok(())
}
