//! Encoder/decoder steganography network and its training loss.
//!
//! The encoder sees the cover with the payload bit-planes stacked on as extra
//! channels and produces a stego image; the decoder recovers per-bit
//! probabilities from the stego image alone. Both are plain stacks of
//! `3×3 conv → BN → LeakyReLU` blocks ending in a `conv → sigmoid` block.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{gen_payload, stack, Checkpoint, Corpus, Image, Payload};
use crate::error::{CheckpointError, Error, Result};
use crate::metrics::{self, ms_ssim_tensor, rmse_tensor, ssim_tensor, MetricReport, Scales};
use crate::nn::{mix_seed, seeded_rng, Binder, ConvBlock, Param};
use crate::tensor::{adam_step, AdamConfig, AdamState, Real, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// (height, width) in pixels.
    pub image_size: (usize, usize),
    /// Payload bits per pixel.
    pub payload_depth: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden_channels: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: (32, 32),
            payload_depth: 1,
            encoder_layers: 9,
            decoder_layers: 5,
            hidden_channels: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_layers < 2 || self.decoder_layers < 2 {
            return Err(Error::Invalid(format!(
                "encoder and decoder need at least 2 layers, got {} and {}",
                self.encoder_layers, self.decoder_layers
            )));
        }
        if self.payload_depth < 1 {
            return Err(Error::Invalid("payload depth must be at least 1".into()));
        }
        if self.hidden_channels < 1 {
            return Err(Error::Invalid("hidden channel count must be positive".into()));
        }
        let (h, w) = self.image_size;
        if h < metrics::SSIM_WINDOW || w < metrics::SSIM_WINDOW {
            return Err(Error::Invalid(format!(
                "image size {h}x{w} is smaller than the SSIM window"
            )));
        }
        Ok(())
    }

    /// Architecture description stored in checkpoints. The seed is left out:
    /// two runs that differ only in seed load each other's weights.
    pub fn echo(&self) -> String {
        format!(
            "{{\"kind\":\"stego\",\"image_size\":[{},{}],\"payload_depth\":{},\"encoder_layers\":{},\"decoder_layers\":{},\"hidden_channels\":{}}}",
            self.image_size.0,
            self.image_size.1,
            self.payload_depth,
            self.encoder_layers,
            self.decoder_layers,
            self.hidden_channels
        )
    }
}

impl ModelConfig {
    /// Architecture recorded in a checkpoint; the seed is taken from `seed`.
    pub fn from_echo(echo: &str, seed: u64) -> Result<ModelConfig> {
        let bad = || Error::Data(format!("checkpoint does not describe a stego model: {echo}"));
        let v: serde_json::Value = serde_json::from_str(echo).map_err(|_| bad())?;
        if v["kind"] != "stego" {
            return Err(bad());
        }
        let int = |key: &str| v[key].as_u64().map(|n| n as usize).ok_or_else(bad);
        let size = v["image_size"].as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
        let dim = |i: usize| size[i].as_u64().map(|n| n as usize).ok_or_else(bad);
        let config = ModelConfig {
            image_size: (dim(0)?, dim(1)?),
            payload_depth: int("payload_depth")?,
            encoder_layers: int("encoder_layers")?,
            decoder_layers: int("decoder_layers")?,
            hidden_channels: int("hidden_channels")?,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Relative weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_ssim: f64,
    pub w_msssim: f64,
    pub w_rmse: f64,
    pub w_encode: f64,
    pub w_decode: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_ssim: 0.5,
            w_msssim: 0.5,
            w_rmse: 0.3,
            w_encode: 1.0,
            w_decode: 0.7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_ssim, self.w_msssim, self.w_rmse, self.w_encode, self.w_decode];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(format!("loss weights must be finite and >= 0: {all:?}")));
        }
        Ok(())
    }
}

/// Optimization settings for [`train_epoch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

/// Scalar loss and its components for one batch.
pub struct LossParts<T: Real> {
    pub total: Tensor<T>,
    pub ssim: f64,
    pub msssim: f64,
    pub rmse: f64,
    pub bce: f64,
}

/// `w_encode·[w_ssim·(1−SSIM) + w_msssim·(1−MS-SSIM) + w_rmse·RMSE] + w_decode·BCE`
pub fn composite_loss<T: Real>(
    cover: &Tensor<T>,
    stego: &Tensor<T>,
    bits: &Tensor<T>,
    probs: &Tensor<T>,
    w: &LossWeights,
) -> Result<LossParts<T>> {
    let lit = T::from_f64;
    let ssim = ssim_tensor(cover, stego)?;
    let msssim = ms_ssim_tensor(cover, stego, Scales::Auto)?;
    let rmse = rmse_tensor(cover, stego)?;
    let bce = probs.binary_cross_entropy(bits)?;

    let encode = ssim
        .rsub_scalar(T::one())
        .mul_scalar(lit(w.w_ssim))
        .add(&msssim.rsub_scalar(T::one()).mul_scalar(lit(w.w_msssim)))?
        .add(&rmse.mul_scalar(lit(w.w_rmse)))?;
    let total = encode
        .mul_scalar(lit(w.w_encode))
        .add(&bce.mul_scalar(lit(w.w_decode)))?;
    let value = total.item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("composite loss is {value}")));
    }
    Ok(LossParts {
        ssim: ssim.item()?.as_f64(),
        msssim: msssim.item()?.as_f64(),
        rmse: rmse.item()?.as_f64(),
        bce: bce.item()?.as_f64(),
        total,
    })
}

/// The encoder/decoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StegoNet<T> {
    pub config: ModelConfig,
    pub encoder: Vec<ConvBlock<T>>,
    pub decoder: Vec<ConvBlock<T>>,
}

impl<T: Real> StegoNet<T> {
    /// Seeded initialization.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed, 0xE0C0_DE);
        let hidden = config.hidden_channels;
        let d = config.payload_depth;

        let mut encoder = Vec::with_capacity(config.encoder_layers);
        for i in 0..config.encoder_layers {
            let c_in = if i == 0 { 3 + d } else { hidden };
            let name = format!("enc{i}");
            encoder.push(if i + 1 == config.encoder_layers {
                ConvBlock::output(&name, c_in, 3, &mut rng)
            } else {
                ConvBlock::hidden(&name, c_in, hidden, &mut rng)
            });
        }
        let mut decoder = Vec::with_capacity(config.decoder_layers);
        for i in 0..config.decoder_layers {
            let c_in = if i == 0 { 3 } else { hidden };
            let name = format!("dec{i}");
            decoder.push(if i + 1 == config.decoder_layers {
                ConvBlock::output(&name, c_in, d, &mut rng)
            } else {
                ConvBlock::hidden(&name, c_in, hidden, &mut rng)
            });
        }
        Ok(StegoNet {
            config: config.clone(),
            encoder,
            decoder,
        })
    }

    fn run(
        blocks: &mut [ConvBlock<T>],
        x: &Tensor<T>,
        training: bool,
        binder: &mut Binder<T>,
    ) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for b in blocks {
            h = b.forward(&h, training, binder)?;
        }
        Ok(h)
    }

    fn check_input(&self, op: &'static str, x: &Tensor<T>, channels: usize) -> Result<usize> {
        let (h, w) = self.config.image_size;
        match *x.shape() {
            [n, c, hh, ww] if c == channels && (hh, ww) == (h, w) => Ok(n),
            ref s => Err(Error::shape(
                op,
                format!("expected [N,{channels},{h},{w}], got {s:?}"),
            )),
        }
    }

    /// `[N,3,H,W]` covers and `[N,D,H,W]` bits to `[N,3,H,W]` stego images.
    pub fn encode_tensor(
        &mut self,
        cover: &Tensor<T>,
        bits: &Tensor<T>,
        training: bool,
        binder: &mut Binder<T>,
    ) -> Result<Tensor<T>> {
        let n = self.check_input("encode", cover, 3)?;
        let nb = self.check_input("encode payload", bits, self.config.payload_depth)?;
        if n != nb {
            return Err(Error::shape(
                "encode",
                format!("{n} covers but {nb} payloads"),
            ));
        }
        let x = cover.concat_channels(bits)?;
        Self::run(&mut self.encoder, &x, training, binder)
    }

    /// `[N,3,H,W]` stego images to `[N,D,H,W]` bit probabilities.
    pub fn decode_tensor(
        &mut self,
        stego: &Tensor<T>,
        training: bool,
        binder: &mut Binder<T>,
    ) -> Result<Tensor<T>> {
        self.check_input("decode", stego, 3)?;
        Self::run(&mut self.decoder, stego, training, binder)
    }

    /// Learnable parameters in binding order (encoder, then decoder).
    pub fn params(&self) -> Vec<&Param<T>> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|b| b.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|b| b.params_mut())
            .collect()
    }

    pub fn cast<U: Real>(&self) -> StegoNet<U> {
        StegoNet {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(|b| b.cast()).collect(),
            decoder: self.decoder.iter().map(|b| b.cast()).collect(),
        }
    }

    /// Applies one Adam step from the gradients collected by `binder`.
    pub fn apply_grads(
        &mut self,
        binder: &Binder<T>,
        state: &mut AdamState<T>,
        adam: &AdamConfig,
    ) -> Result<()> {
        let grads = binder.grads();
        let mut values: Vec<&mut [T]> = self
            .params_mut()
            .into_iter()
            .map(|p| p.value.as_mut_slice())
            .collect();
        adam_step(&mut values, &grads, state, adam)
    }
}

impl StegoNet<f32> {
    /// Eval-mode embedding of one payload into one cover.
    pub fn encode(&self, cover: &Image, payload: &Payload) -> Result<Image> {
        let out = self.encode_batch(&[cover], &[payload])?;
        Ok(out.into_iter().next().expect("one image in, one out"))
    }

    /// Eval-mode bit probabilities for one stego image, `[D, H, W]` order.
    pub fn decode(&self, stego: &Image) -> Result<Vec<f32>> {
        let out = self.decode_batch(&[stego])?;
        Ok(out.into_iter().next().expect("one image in, one out"))
    }

    pub fn encode_batch(&self, covers: &[&Image], payloads: &[&Payload]) -> Result<Vec<Image>> {
        let (shape, data) = stack(covers)?;
        let bits = payload_tensor(payloads, &self.config)?;
        let cover = Tensor::new(&shape, data)?;
        let mut net = self.clone();
        let stego = net.encode_tensor(&cover, &bits, false, &mut Binder::new(false))?;
        split_images(&stego)
    }

    pub fn decode_batch(&self, stegos: &[&Image]) -> Result<Vec<Vec<f32>>> {
        let (shape, data) = stack(stegos)?;
        let mut net = self.clone();
        let probs = net.decode_tensor(&Tensor::new(&shape, data)?, false, &mut Binder::new(false))?;
        let per = probs.numel() / stegos.len();
        Ok(probs.data().chunks(per).map(<[f32]>::to_vec).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for b in self.encoder.iter().chain(&self.decoder) {
            b.export(&mut tensors);
        }
        Checkpoint {
            config_echo: self.config.echo(),
            tensors,
        }
    }

    /// Rebuilds a network for `config` from a checkpoint written for the same
    /// architecture.
    pub fn from_checkpoint(ck: &Checkpoint, config: &ModelConfig) -> Result<Self> {
        if ck.config_echo != config.echo() {
            return Err(Error::Checkpoint {
                path: Default::default(),
                source: CheckpointError::ConfigMismatch(format!(
                    "file has {}, model is {}",
                    ck.config_echo,
                    config.echo()
                )),
            });
        }
        let mut net = StegoNet::new(config)?;
        let mut blobs = ck.tensors.iter().cloned();
        for b in net.encoder.iter_mut().chain(net.decoder.iter_mut()) {
            b.import(&mut blobs)?;
        }
        if blobs.next().is_some() {
            return Err(Error::Data("checkpoint has extra tensors".into()));
        }
        Ok(net)
    }

    /// Short content hash of the weights and running statistics.
    pub fn fingerprint(&self) -> String {
        self.to_checkpoint().fingerprint()
    }
}

fn payload_tensor<T: Real>(payloads: &[&Payload], config: &ModelConfig) -> Result<Tensor<T>> {
    let (h, w) = config.image_size;
    let d = config.payload_depth;
    let mut data = Vec::with_capacity(payloads.len() * d * h * w);
    for p in payloads {
        if (p.depth, p.height, p.width) != (d, h, w) {
            return Err(Error::shape(
                "payload",
                format!(
                    "payload is {}x{}x{}, model expects {d}x{h}x{w}",
                    p.depth, p.height, p.width
                ),
            ));
        }
        data.extend(p.bits.iter().map(|&b| T::from_f64(b as f64)));
    }
    Tensor::new(&[payloads.len(), d, h, w], data)
}

fn split_images(t: &Tensor<f32>) -> Result<Vec<Image>> {
    let &[n, c, h, w] = t.shape() else {
        return Err(Error::shape("split_images", format!("{:?}", t.shape())));
    };
    (0..n)
        .map(|i| Image::new(c, h, w, t.data()[i * c * h * w..(i + 1) * c * h * w].to_vec()))
        .collect()
}

/// Deterministic per-sample payload seed for a given epoch stream.
pub fn payload_seed(run_seed: u64, epoch_stream: u64, sample: usize) -> u64 {
    mix_seed(mix_seed(run_seed, epoch_stream), sample as u64)
}

const VALIDATION_STREAM: u64 = 0x7A11_D000;
const EVAL_BATCH: usize = 16;

/// Fixed payloads so validation numbers are comparable across epochs.
pub fn validation_payloads(indices: &[usize], config: &ModelConfig, seed: u64) -> Vec<Payload> {
    let (h, w) = config.image_size;
    indices
        .iter()
        .map(|&i| gen_payload(payload_seed(seed, VALIDATION_STREAM, i), config.payload_depth, h, w))
        .collect()
}

/// Composite loss and metric report of `net` on `indices` in eval mode.
pub fn evaluate(
    net: &StegoNet<f32>,
    corpus: &Corpus,
    indices: &[usize],
    payloads: &[Payload],
    weights: &LossWeights,
) -> Result<(f64, MetricReport)> {
    if indices.is_empty() {
        return Err(Error::Invalid("evaluation set is empty".into()));
    }
    let mut loss_sum = 0.0;
    let mut reports = Vec::with_capacity(indices.len());
    for (chunk, pay) in indices.chunks(EVAL_BATCH).zip(payloads.chunks(EVAL_BATCH)) {
        let covers = corpus.images(chunk);
        let pays: Vec<&Payload> = pay.iter().collect();
        let stegos = net.encode_batch(&covers, &pays)?;
        let stego_refs: Vec<&Image> = stegos.iter().collect();
        let probs = net.decode_batch(&stego_refs)?;

        let (shape, cdata) = stack(&covers)?;
        let (_, sdata) = stack(&stego_refs)?;
        let cover_t = Tensor::<f32>::new(&shape, cdata)?;
        let stego_t = Tensor::<f32>::new(&shape, sdata)?;
        let bits_t = payload_tensor::<f32>(&pays, &net.config)?;
        let probs_t = Tensor::<f32>::new(bits_t.shape(), probs.concat())?;
        let parts = composite_loss(&cover_t, &stego_t, &bits_t, &probs_t, weights)?;
        loss_sum += parts.total.item()?.as_f64() * chunk.len() as f64;

        for ((cover, stego), (p, payload)) in covers.iter().zip(&stegos).zip(probs.iter().zip(&pays)) {
            reports.push(metrics::report(cover, stego, p, &payload.bits)?);
        }
    }
    Ok((loss_sum / indices.len() as f64, MetricReport::mean(&reports)))
}

/// Result of one pass over a training pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub train_loss: f64,
    pub val_loss: f64,
    pub report: MetricReport,
}

/// One shuffled pass over `pool` with a fresh random payload per sample,
/// one Adam step per batch, followed by validation on `val`.
pub fn train_epoch(
    net: &mut StegoNet<f32>,
    adam: &mut AdamState<f32>,
    corpus: &Corpus,
    pool: &[usize],
    val: (&[usize], &[Payload]),
    cfg: &TrainConfig,
    epoch_stream: u64,
) -> Result<EpochOutcome> {
    if pool.is_empty() {
        return Err(Error::Invalid("training pool is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let (h, w) = net.config.image_size;
    let depth = net.config.payload_depth;
    let mut order = pool.to_vec();
    order.shuffle(&mut seeded_rng(cfg.seed, mix_seed(epoch_stream, 0x5EF1)));

    let mut loss_sum = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        let payloads: Vec<Payload> = batch
            .iter()
            .map(|&i| gen_payload(payload_seed(cfg.seed, epoch_stream, i), depth, h, w))
            .collect();
        let pays: Vec<&Payload> = payloads.iter().collect();
        let (shape, data) = stack(&corpus.images(batch))?;
        let cover = Tensor::new(&shape, data)?;
        let bits = payload_tensor(&pays, &net.config)?;

        let mut binder = Binder::new(true);
        let stego = net.encode_tensor(&cover, &bits, true, &mut binder)?;
        let probs = net.decode_tensor(&stego, true, &mut binder)?;
        let parts = composite_loss(&cover, &stego, &bits, &probs, &cfg.weights)?;
        parts.total.backward()?;
        net.apply_grads(&binder, adam, &cfg.adam)?;
        loss_sum += parts.total.item()?.as_f64() * batch.len() as f64;
    }
    let (val_loss, report) = evaluate(net, corpus, val.0, val.1, &cfg.weights)?;
    Ok(EpochOutcome {
        train_loss: loss_sum / pool.len() as f64,
        val_loss,
        report,
    })
}
