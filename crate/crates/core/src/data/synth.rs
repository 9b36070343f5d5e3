//! Seeded synthetic corpus spanning textured, smooth and flat images.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusSource, Image, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Band-limited colour noise.
    Texture,
    /// Linear blend between two colours.
    Gradient,
    /// A few large flat colour blocks with one small noisy patch.
    Solid,
}

impl Family {
    /// Families cycle texture, texture, gradient, solid, giving a 50/25/25 mix.
    pub fn for_index(i: usize) -> Family {
        match i % 4 {
            0 | 1 => Family::Texture,
            2 => Family::Gradient,
            _ => Family::Solid,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Texture => "texture",
            Family::Gradient => "gradient",
            Family::Solid => "solid",
        }
    }
}

const TEXTURE_STD: f64 = 0.28;
const SOLID_SPREAD: f64 = 0.1;
const PATCH_AMPLITUDE: f64 = 0.1;

/// Generates `n` images of size `(height, width)`.
pub fn synth_corpus(n: usize, (h, w): (usize, usize), seed: u64) -> Result<Corpus> {
    if n < 10 {
        return Err(Error::Invalid(format!(
            "synthetic corpus needs at least 10 images, got {n}"
        )));
    }
    if h < 4 || w < 4 {
        return Err(Error::Invalid(format!("synthetic images must be at least 4x4, got {h}x{w}")));
    }
    let samples = (0..n)
        .map(|i| {
            let family = Family::for_index(i);
            let mut rng = seeded_rng(seed, 0x1000_0000 + i as u64);
            let image = match family {
                Family::Texture => texture(&mut rng, h, w),
                Family::Gradient => gradient(&mut rng, h, w),
                Family::Solid => solid(&mut rng, h, w),
            };
            SampleRecord {
                id: format!("syn{i:05}"),
                path: format!("synthetic/{}/{i:05}", family.name()),
                family: Some(family),
                image,
            }
        })
        .collect();
    Ok(Corpus {
        samples,
        source: CorpusSource::Synthetic { n },
        image_size: (h, w),
        split: Split::assign(n, seed),
    })
}

fn texture(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    let hw = h * w;
    let mut data = Vec::with_capacity(3 * hw);
    for _ in 0..3 {
        let noise: Vec<f64> = (0..hw).map(|_| rng.gen::<f64>()).collect();
        // 3-tap box blur in both directions, wrapping at the borders
        let mut blurred = vec![0.0; hw];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in [h - 1, 0, 1] {
                    for dx in [w - 1, 0, 1] {
                        s += noise[((y + dy) % h) * w + (x + dx) % w];
                    }
                }
                blurred[y * w + x] = 0.5 * noise[y * w + x] + 0.5 * s / 9.0;
            }
        }
        let mean = blurred.iter().sum::<f64>() / hw as f64;
        let std = (blurred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw as f64).sqrt();
        let target_mean = rng.gen_range(0.4..0.6);
        data.extend(
            blurred
                .iter()
                .map(|v| (target_mean + (v - mean) / std * TEXTURE_STD).clamp(0.0, 1.0) as f32),
        );
    }
    Image::new(3, h, w, data).expect("dimensions match")
}

fn gradient(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    let c0: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..0.95));
    let c1: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..0.95));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let proj = |y: usize, x: usize| x as f64 * dx + y as f64 * dy;
    let corners = [proj(0, 0), proj(0, w - 1), proj(h - 1, 0), proj(h - 1, w - 1)];
    let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hw = h * w;
    let mut data = vec![0.0f32; 3 * hw];
    for y in 0..h {
        for x in 0..w {
            let t = (proj(y, x) - lo) / (hi - lo);
            for c in 0..3 {
                data[c * hw + y * w + x] = (c0[c] + (c1[c] - c0[c]) * t) as f32;
            }
        }
    }
    Image::new(3, h, w, data).expect("dimensions match")
}

fn solid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.2..0.8));
    let vertical = rng.gen_bool(0.5);
    let extent = if vertical { w } else { h };
    let blocks = rng.gen_range(2..=4usize);
    let mut cuts: Vec<usize> = (1..blocks).map(|_| rng.gen_range(1..extent)).collect();
    cuts.sort_unstable();
    let colours: Vec<[f64; 3]> = (0..blocks)
        .map(|_| std::array::from_fn(|c| base[c] + rng.gen_range(-SOLID_SPREAD..SOLID_SPREAD)))
        .collect();
    let patch = (h.min(w) / 5).max(2);
    let (py, px) = (rng.gen_range(0..=h - patch), rng.gen_range(0..=w - patch));

    let hw = h * w;
    let mut data = vec![0.0f32; 3 * hw];
    for y in 0..h {
        for x in 0..w {
            let pos = if vertical { x } else { y };
            let block = cuts.iter().filter(|&&c| pos >= c).count();
            let in_patch = (py..py + patch).contains(&y) && (px..px + patch).contains(&x);
            for c in 0..3 {
                let mut v = colours[block][c];
                if in_patch {
                    v += rng.gen_range(-PATCH_AMPLITUDE..PATCH_AMPLITUDE);
                }
                data[c * hw + y * w + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image::new(3, h, w, data).expect("dimensions match")
}
