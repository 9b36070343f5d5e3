//! Small CNN detector that scores how likely an image carries a payload.
//!
//! Images are reduced to a grayscale high-pass residual with the fixed 5×5
//! KV kernel, then passed through `conv → BN → LeakyReLU → 2×2 pool` blocks,
//! global average pooling and a 1×1 conv into a sigmoid. Label 1 is stego.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Checkpoint, Image};
use crate::error::{CheckpointError, Error, Result};
use crate::nn::{seeded_rng, Binder, ConvBlock, Param};
use crate::tensor::{AdamConfig, AdamState, Tensor, adam_step};

/// KV high-pass kernel, before the 1/12 scale.
const KV_KERNEL: [[f32; 5]; 5] = [
    [-1.0, 2.0, -2.0, 2.0, -1.0],
    [2.0, -6.0, 8.0, -6.0, 2.0],
    [-2.0, 8.0, -12.0, 8.0, -2.0],
    [2.0, -6.0, 8.0, -6.0, 2.0],
    [-1.0, 2.0, -2.0, 2.0, -1.0],
];

/// Largest tolerated ratio between the two class sizes.
pub const MAX_CLASS_RATIO: f64 = 10.0;
const HOLDOUT_FRACTION: f64 = 0.2;

pub fn kv_kernel() -> [[f32; 5]; 5] {
    KV_KERNEL.map(|row| row.map(|v| v / 12.0))
}

/// Grayscale KV residual of `img` as a `[1, H, W]` image. Borders are padded
/// by replicating edge pixels, so a constant image has a zero residual.
pub fn residual_frontend(img: &Image) -> Image {
    let gray = img.to_gray();
    let (h, w) = (gray.height, gray.width);
    let k = kv_kernel();
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        gray.data[yy * w + xx]
    };
    let mut data = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0f32;
            for (ky, row) in k.iter().enumerate() {
                for (kx, &v) in row.iter().enumerate() {
                    s += v * at(y as isize + ky as isize - 2, x as isize + kx as isize - 2);
                }
            }
            data[y * w + x] = s;
        }
    }
    Image {
        channels: 1,
        height: h,
        width: w,
        data,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub conv_blocks: usize,
    pub channels: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            conv_blocks: 3,
            channels: 8,
            seed: 0,
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_blocks < 1 || self.channels < 1 || self.batch_size < 1 {
            return Err(Error::Invalid(format!(
                "detector needs conv_blocks, channels and batch_size >= 1, got {}, {}, {}",
                self.conv_blocks, self.channels, self.batch_size
            )));
        }
        Ok(())
    }

    /// Detector shape recorded in a checkpoint; training settings are
    /// taken from `base`.
    pub fn from_echo(echo: &str, base: &DetectorConfig) -> Result<DetectorConfig> {
        let bad = || Error::Data(format!("checkpoint does not describe a detector: {echo}"));
        let v: serde_json::Value = serde_json::from_str(echo).map_err(|_| bad())?;
        if v["kind"] != "detector" {
            return Err(bad());
        }
        let int = |key: &str| v[key].as_u64().map(|n| n as usize).ok_or_else(bad);
        Ok(DetectorConfig {
            conv_blocks: int("conv_blocks")?,
            channels: int("channels")?,
            ..base.clone()
        })
    }

    fn echo(&self) -> String {
        format!(
            "{{\"kind\":\"detector\",\"conv_blocks\":{},\"channels\":{}}}",
            self.conv_blocks, self.channels
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub config: DetectorConfig,
    pub blocks: Vec<ConvBlock<f32>>,
    pub head: ConvBlock<f32>,
}

impl Detector {
    pub fn new(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed, 0xDE7E_C70);
        let blocks = (0..config.conv_blocks)
            .map(|i| {
                let c_in = if i == 0 { 1 } else { config.channels };
                ConvBlock::hidden(&format!("det{i}"), c_in, config.channels, &mut rng)
            })
            .collect();
        let head = ConvBlock::pointwise_output("det_head", config.channels, 1, &mut rng);
        Ok(Detector {
            config: config.clone(),
            blocks,
            head,
        })
    }

    fn forward(&mut self, x: &Tensor<f32>, training: bool, binder: &mut Binder<f32>) -> Result<Tensor<f32>> {
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward(&h, training, binder)?;
            if h.shape()[2] >= 2 && h.shape()[3] >= 2 {
                h = h.avg_pool2()?;
            }
        }
        let n = h.shape()[0];
        let c = h.shape()[1];
        let pooled = h.mean_spatial()?.reshape(&[n, c, 1, 1])?;
        self.head.forward(&pooled, training, binder)?.reshape(&[n])
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        self.blocks
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .flat_map(|b| b.params_mut())
            .collect()
    }

    fn residual_batch(images: &[&Image]) -> Result<Tensor<f32>> {
        let first = images
            .first()
            .ok_or_else(|| Error::Invalid("no images to score".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if (img.height, img.width) != (h, w) {
                return Err(Error::shape("detector", "images in one batch differ in size"));
            }
            data.extend(residual_frontend(img).data);
        }
        Tensor::new(&[images.len(), 1, h, w], data)
    }

    /// Stego probability per image, in eval mode.
    pub fn score(&self, images: &[&Image]) -> Result<Vec<f64>> {
        let mut net = self.clone();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(32) {
            let x = Self::residual_batch(chunk)?;
            let p = net.forward(&x, false, &mut Binder::new(false))?;
            out.extend(p.data().iter().map(|&v| v as f64));
        }
        Ok(out)
    }

    /// Fraction of images classified correctly at the 0.5 cut.
    pub fn accuracy(&self, covers: &[&Image], stegos: &[&Image]) -> Result<f64> {
        let c = self.score(covers)?;
        let s = self.score(stegos)?;
        let right = c.iter().filter(|&&p| p < 0.5).count() + s.iter().filter(|&&p| p >= 0.5).count();
        Ok(right as f64 / (c.len() + s.len()) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for b in self.blocks.iter().chain(std::iter::once(&self.head)) {
            b.export(&mut tensors);
        }
        Checkpoint {
            config_echo: self.config.echo(),
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, config: &DetectorConfig) -> Result<Self> {
        if ck.config_echo != config.echo() {
            return Err(Error::Checkpoint {
                path: Default::default(),
                source: CheckpointError::ConfigMismatch(format!(
                    "file has {}, detector is {}",
                    ck.config_echo,
                    config.echo()
                )),
            });
        }
        let mut det = Detector::new(config)?;
        let mut blobs = ck.tensors.iter().cloned();
        for b in det.blocks.iter_mut().chain(std::iter::once(&mut det.head)) {
            b.import(&mut blobs)?;
        }
        Ok(det)
    }
}

/// Trained detector and its accuracy on the held-out fifth of the pairs.
#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub detector: Detector,
    pub holdout_accuracy: f64,
}

/// Trains a cover (0) versus stego (1) classifier with BCE.
pub fn train_detector(covers: &[&Image], stegos: &[&Image], config: &DetectorConfig) -> Result<TrainedDetector> {
    config.validate()?;
    let (nc, ns) = (covers.len(), stegos.len());
    if nc == 0 || ns == 0 {
        return Err(Error::Invalid(format!(
            "detector needs both classes, got {nc} covers and {ns} stegos"
        )));
    }
    let ratio = nc.max(ns) as f64 / nc.min(ns) as f64;
    if ratio > MAX_CLASS_RATIO {
        return Err(Error::Invalid(format!(
            "class imbalance {nc}:{ns} exceeds {MAX_CLASS_RATIO}:1"
        )));
    }
    let mut samples: Vec<(&Image, f32)> = covers
        .iter()
        .map(|&c| (c, 0.0))
        .chain(stegos.iter().map(|&s| (s, 1.0)))
        .collect();
    samples.shuffle(&mut seeded_rng(config.seed, 0x401D_0u64));
    let n_hold = ((samples.len() as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, samples.len() - 1);
    let (hold, fit) = samples.split_at(n_hold);
    let residuals: Vec<Image> = fit.iter().map(|(img, _)| residual_frontend(img)).collect();

    let mut det = Detector::new(config)?;
    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..fit.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut seeded_rng(config.seed, 0x401D_1000 + epoch as u64));
        for batch in order.chunks(config.batch_size) {
            let (h, w) = (residuals[0].height, residuals[0].width);
            let mut data = Vec::with_capacity(batch.len() * h * w);
            for &i in batch {
                data.extend_from_slice(&residuals[i].data);
            }
            let x = Tensor::new(&[batch.len(), 1, h, w], data)?;
            let y = Tensor::new(&[batch.len()], batch.iter().map(|&i| fit[i].1).collect())?;
            let mut binder = Binder::new(true);
            let p = det.forward(&x, true, &mut binder)?;
            let loss = p.binary_cross_entropy(&y)?;
            let v = loss.item()?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!("detector loss is {v}")));
            }
            loss.backward()?;
            let grads = binder.grads();
            let mut values: Vec<&mut [f32]> = det.params_mut().into_iter().map(|p| p.value.as_mut_slice()).collect();
            adam_step(&mut values, &grads, &mut adam, &config.adam)?;
        }
    }
    let hold_covers: Vec<&Image> = hold.iter().filter(|s| s.1 == 0.0).map(|s| s.0).collect();
    let hold_stegos: Vec<&Image> = hold.iter().filter(|s| s.1 == 1.0).map(|s| s.0).collect();
    let holdout_accuracy = det.accuracy(&hold_covers, &hold_stegos)?;
    Ok(TrainedDetector {
        detector: det,
        holdout_accuracy,
    })
}

/// Per-image scores and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub scores: Vec<(String, f64)>,
    pub mean: f64,
}

impl ScoreReport {
    /// `image_id,score` rows followed by a `mean,<value>` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,score\n");
        for (id, s) in &self.scores {
            out.push_str(&format!("{id},{s:.6}\n"));
        }
        out.push_str(&format!("mean,{:.6}\n", self.mean));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn score_corpus(detector: &Detector, ids: &[String], images: &[&Image]) -> Result<ScoreReport> {
    if images.is_empty() {
        return Err(Error::Invalid("cannot score an empty image set".into()));
    }
    if ids.len() != images.len() {
        return Err(Error::Invalid(format!("{} ids for {} images", ids.len(), images.len())));
    }
    let scores = detector.score(images)?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(ScoreReport {
        scores: ids.iter().cloned().zip(scores).collect(),
        mean,
    })
}
