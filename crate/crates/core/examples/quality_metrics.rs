//! SSIM, MS-SSIM, PSNR and RMSE of a cover against increasingly noisy copies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcl::data::{synth_corpus, Image};
use stcl::metrics::{self, Scales};

fn main() -> stcl::Result<()> {
    let corpus = synth_corpus(10, (64, 64), 1)?;
    let cover = &corpus.samples[0].image;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "noise", "ssim", "ms-ssim", "psnr", "rmse");
    for amp in [0.0f32, 0.01, 0.03, 0.1, 0.3] {
        let data = cover
            .data
            .iter()
            .map(|v| if amp > 0.0 { (v + rng.gen_range(-amp..amp)).clamp(0.0, 1.0) } else { *v })
            .collect();
        let noisy = Image::new(cover.channels, cover.height, cover.width, data)?;
        println!(
            "{amp:>6.2} {:>8.4} {:>8.4} {:>8.2} {:>8.4}",
            metrics::ssim(cover, &noisy)?,
            metrics::ms_ssim(cover, &noisy, Scales::Auto)?,
            metrics::psnr(cover, &noisy)?,
            metrics::rmse(cover, &noisy)?
        );
    }
    Ok(())
}
