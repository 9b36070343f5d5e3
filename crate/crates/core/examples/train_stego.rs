//! Trains a small encoder/decoder on synthetic covers, then hides and
//! recovers one payload.

use stcl::data::{gen_payload, synth_corpus};
use stcl::metrics::{self, bit_accuracy};
use stcl::model::{ModelConfig, TrainConfig};
use stcl::schedule::run_baseline;

fn main() -> stcl::Result<()> {
    let model = ModelConfig {
        image_size: (16, 16),
        encoder_layers: 4,
        decoder_layers: 3,
        hidden_channels: 8,
        ..ModelConfig::default()
    };
    let corpus = synth_corpus(60, model.image_size, 0)?;
    let run = run_baseline(&corpus, &model, &TrainConfig::default(), 30)?;
    for row in &run.log.rows {
        println!("epoch {:2}: val loss {:.4} psnr {:.2} acc {:.3}", row.epoch, row.val_loss, row.psnr, row.accuracy);
    }

    let cover = &corpus.samples[corpus.split.test[0]].image;
    let payload = gen_payload(99, model.payload_depth, 16, 16);
    let stego = run.net.encode(cover, &payload)?;
    let probs = run.net.decode(&stego)?;
    println!(
        "test cover {}: psnr {:.2} dB, ssim {:.4}, {} of {} bits recovered ({:.1}%)",
        corpus.samples[corpus.split.test[0]].id,
        metrics::psnr(cover, &stego)?,
        metrics::ssim(cover, &stego)?,
        probs.iter().zip(&payload.bits).filter(|(p, b)| (**p >= 0.5) == (**b >= 0.5)).count(),
        payload.len(),
        100.0 * bit_accuracy(&probs, &payload.bits)?
    );
    Ok(())
}
