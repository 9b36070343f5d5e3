//! Images, corpora, payloads, checkpoints and CSV files.

mod checkpoint;
mod corpus;
mod log;
mod payload;
mod synth;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use corpus::save_png;
pub use corpus::{load_corpus, load_directory, Corpus, CorpusSource, SampleRecord, Split};
pub use log::{LogRow, TrainingLog, LOG_COLUMNS};
pub use payload::{gen_payload, Payload};
pub use synth::{synth_corpus, Family};

use crate::error::{Error, Result};

/// Planar (`[C, H, W]`) image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "image",
                format!(
                    "{channels}x{height}x{width} needs {} values, got {}",
                    channels * height * width,
                    data.len()
                ),
            ));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, v: f32) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![v; channels * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Population variance over all pixels and channels.
    pub fn variance(&self) -> f64 {
        let n = self.data.len() as f64;
        let mean = self.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        self.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
    }

    /// Luma (`0.299 R + 0.587 G + 0.114 B`) of an RGB image.
    pub fn to_gray(&self) -> Image {
        if self.channels != 3 {
            return self.clone();
        }
        let hw = self.height * self.width;
        let (r, rest) = self.data.split_at(hw);
        let (g, b) = rest.split_at(hw);
        let data = (0..hw)
            .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
            .collect();
        Image {
            channels: 1,
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Stacks equally sized images into one `[N, C, H, W]` buffer.
pub fn stack(images: &[&Image]) -> Result<(Vec<usize>, Vec<f32>)> {
    let first = images
        .first()
        .ok_or_else(|| Error::Invalid("cannot stack zero images".into()))?;
    let (c, h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if img.dims() != (c, h, w) {
            return Err(Error::shape(
                "stack",
                format!("mixed image sizes {:?} and {:?}", first.dims(), img.dims()),
            ));
        }
        data.extend_from_slice(&img.data);
    }
    Ok((vec![images.len(), c, h, w], data))
}

/// Per-channel 256-bin histogram of pixel values.
pub fn histogram(img: &Image) -> Vec<[u64; 256]> {
    let hw = img.height * img.width;
    img.data
        .chunks(hw)
        .map(|plane| {
            let mut bins = [0u64; 256];
            for &v in plane {
                let b = (v.clamp(0.0, 1.0) * 255.0).round() as usize;
                bins[b] += 1;
            }
            bins
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_of_white_is_white() {
        let img = Image::filled(3, 2, 2, 1.0);
        assert!(img.to_gray().data.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn histogram_counts_every_pixel() {
        let img = Image::new(1, 1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let h = histogram(&img);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0][0] + h[0][128] + h[0][255], 3);
    }
}
