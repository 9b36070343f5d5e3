//! Parameterized layers built on the tensor engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, RunningStats, Tensor};

pub const LEAKY_SLOPE: f64 = 0.01;

/// A named, shaped block of values: a learnable parameter or a buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        Param {
            name: name.into(),
            shape: shape.to_vec(),
            value,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![v; n])
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            shape: self.shape.clone(),
            value: self.value.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Turns parameters into graph leaves for one forward pass and remembers
/// them, in order, so their gradients can be collected after backward.
pub struct Binder<T: Real> {
    track: bool,
    leaves: Vec<Tensor<T>>,
}

impl<T: Real> Binder<T> {
    /// `track = false` builds constants and records no graph.
    pub fn new(track: bool) -> Self {
        Binder {
            track,
            leaves: Vec::new(),
        }
    }

    pub fn bind(&mut self, p: &Param<T>) -> Tensor<T> {
        if self.track {
            let t = Tensor::param(&p.shape, p.value.clone()).expect("param shape is consistent");
            self.leaves.push(t.clone());
            t
        } else {
            Tensor::new(&p.shape, p.value.clone()).expect("param shape is consistent")
        }
    }

    pub fn leaves(&self) -> &[Tensor<T>] {
        &self.leaves
    }

    /// Gradients in binding order; parameters the loss never reached get
    /// zeros.
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.leaves
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![T::zero(); t.numel()]))
            .collect()
    }
}

/// 2-D convolution with a square odd kernel and zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Conv2d<T> {
    /// Kaiming-uniform (fan-in, LeakyReLU gain) weights and zero bias.
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let bound = gain * (3.0 / fan_in).sqrt();
        let value = (0..c_out * c_in * k * k)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Conv2d {
            weight: Param::new(format!("{name}.weight"), &[c_out, c_in, k, k], value),
            bias: Param::filled(format!("{name}.bias"), &[c_out], T::zero()),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &Tensor<T>, binder: &mut Binder<T>) -> Result<Tensor<T>> {
        let w = binder.bind(&self.weight);
        let b = binder.bind(&self.bias);
        x.conv2d(&w, Some(&b))
    }
}

/// Batch normalization: learnable `gamma`/`beta` plus running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running: RunningStats<T>,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNormState {
            gamma: Param::filled(format!("{name}.gamma"), &[channels], T::one()),
            beta: Param::filled(format!("{name}.beta"), &[channels], T::zero()),
            running: RunningStats::new(channels),
        }
    }

    pub fn forward(
        &mut self,
        x: &Tensor<T>,
        training: bool,
        binder: &mut Binder<T>,
    ) -> Result<Tensor<T>> {
        let g = binder.bind(&self.gamma);
        let b = binder.bind(&self.beta);
        x.batch_norm(&g, &b, &mut self.running, training)
    }

    fn buffer_name(&self, which: &str) -> String {
        let base = self.gamma.name.trim_end_matches(".gamma");
        format!("{base}.{which}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu,
    Sigmoid,
}

/// `conv → [BN] → activation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub norm: Option<BatchNormState<T>>,
    pub activation: Activation,
}

impl<T: Real> ConvBlock<T> {
    /// Hidden block: 3×3 conv, batch norm, LeakyReLU.
    pub fn hidden(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvBlock {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, 3, rng),
            norm: Some(BatchNormState::new(&format!("{name}.bn"), c_out)),
            activation: Activation::LeakyRelu,
        }
    }

    /// Output block: 3×3 conv straight into a sigmoid.
    pub fn output(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvBlock {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, 3, rng),
            norm: None,
            activation: Activation::Sigmoid,
        }
    }

    /// 1×1 conv into a sigmoid.
    pub fn pointwise_output(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvBlock {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, 1, rng),
            norm: None,
            activation: Activation::Sigmoid,
        }
    }

    pub fn forward(
        &mut self,
        x: &Tensor<T>,
        training: bool,
        binder: &mut Binder<T>,
    ) -> Result<Tensor<T>> {
        let mut y = self.conv.forward(x, binder)?;
        if let Some(bn) = self.norm.as_mut() {
            y = bn.forward(&y, training, binder)?;
        }
        Ok(match self.activation {
            Activation::LeakyRelu => y.leaky_relu(T::from_f64(LEAKY_SLOPE)),
            Activation::Sigmoid => y.sigmoid(),
        })
    }

    /// Learnable parameters in the order `forward` binds them.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = vec![&self.conv.weight, &self.conv.bias];
        if let Some(bn) = &self.norm {
            out.extend([&bn.gamma, &bn.beta]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = vec![&mut self.conv.weight, &mut self.conv.bias];
        if let Some(bn) = &mut self.norm {
            out.extend([&mut bn.gamma, &mut bn.beta]);
        }
        out
    }

    /// Parameters followed by batch-norm running statistics.
    pub fn export(&self, out: &mut Vec<Param<T>>) {
        out.extend(self.params().into_iter().cloned());
        if let Some(bn) = &self.norm {
            let c = bn.running.channels();
            out.push(Param::new(bn.buffer_name("running_mean"), &[c], bn.running.mean.clone()));
            out.push(Param::new(bn.buffer_name("running_var"), &[c], bn.running.var.clone()));
        }
    }

    /// Inverse of [`ConvBlock::export`]; names and shapes must line up.
    pub fn import(&mut self, blobs: &mut impl Iterator<Item = Param<T>>) -> Result<()> {
        fn take<T: Real>(
            dst: &mut Vec<T>,
            name: &str,
            shape: &[usize],
            blobs: &mut impl Iterator<Item = Param<T>>,
        ) -> Result<()> {
            let blob = blobs
                .next()
                .ok_or_else(|| Error::Data(format!("missing tensor {name}")))?;
            if blob.name != name || blob.shape != shape {
                return Err(Error::Data(format!(
                    "expected {name} {shape:?}, found {} {:?}",
                    blob.name, blob.shape
                )));
            }
            *dst = blob.value;
            Ok(())
        }
        for p in self.params_mut() {
            let (name, shape) = (p.name.clone(), p.shape.clone());
            take(&mut p.value, &name, &shape, blobs)?;
        }
        if let Some(bn) = &mut self.norm {
            let c = [bn.running.channels()];
            let (mn, vn) = (bn.buffer_name("running_mean"), bn.buffer_name("running_var"));
            take(&mut bn.running.mean, &mn, &c, blobs)?;
            take(&mut bn.running.var, &vn, &c, blobs)?;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ConvBlock<U> {
        ConvBlock {
            conv: Conv2d {
                weight: self.conv.weight.cast(),
                bias: self.conv.bias.cast(),
            },
            norm: self.norm.as_ref().map(|bn| BatchNormState {
                gamma: bn.gamma.cast(),
                beta: bn.beta.cast(),
                running: RunningStats {
                    mean: bn.running.mean.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    var: bn.running.var.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    momentum: bn.running.momentum,
                    eps: bn.running.eps,
                },
            }),
            activation: self.activation,
        }
    }
}

/// Deterministic generator for a labelled sub-stream of a run seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

/// SplitMix64-style combination of two integers into one seed.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
