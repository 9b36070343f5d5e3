use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

impl<T: Real> Tensor<T> {
    /// Batch normalization over `[N, C, H, W]` followed by `gamma·x̂ + beta`.
    ///
    /// In training mode the batch mean and biased variance normalize the
    /// input, and the running statistics move toward the batch mean and
    /// unbiased variance by `momentum`. In eval mode the running statistics
    /// are used and `stats` is left untouched.
    pub fn batch_norm(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        stats: &mut RunningStats<T>,
        training: bool,
    ) -> Result<Self> {
        let &[n, c, h, w] = self.shape() else {
            return Err(Error::shape(
                "batch_norm",
                format!("expected [N,C,H,W], got {:?}", self.shape()),
            ));
        };
        if gamma.shape() != [c] || beta.shape() != [c] || stats.channels() != c {
            return Err(Error::shape(
                "batch_norm",
                format!(
                    "input has C={c}; gamma {:?}, beta {:?}, running stats {}",
                    gamma.shape(),
                    beta.shape(),
                    stats.channels()
                ),
            ));
        }
        let hw = h * w;
        let count = n * hw;
        if training && count < 2 {
            return Err(Error::Invalid(
                "batch_norm in training mode needs at least 2 values per channel".into(),
            ));
        }
        let x = self.data();
        let index = move |i: usize, ch: usize| (i * c + ch) * hw;

        let (mean, inv_std): (Vec<f64>, Vec<f64>) = if training {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for i in 0..n {
                    s += x[index(i, ch)..][..hw].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / count as f64;
                let mut ss = 0.0;
                for i in 0..n {
                    ss += x[index(i, ch)..][..hw]
                        .iter()
                        .map(|v| (v.as_f64() - m).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = ss / count as f64;
            }
            let mo = stats.momentum;
            for ch in 0..c {
                let unbiased = var[ch] * count as f64 / (count - 1) as f64;
                stats.mean[ch] = T::from_f64((1.0 - mo) * stats.mean[ch].as_f64() + mo * mean[ch]);
                stats.var[ch] = T::from_f64((1.0 - mo) * stats.var[ch].as_f64() + mo * unbiased);
            }
            let inv = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
            (mean, inv)
        } else {
            (
                stats.mean.iter().map(|v| v.as_f64()).collect(),
                stats
                    .var
                    .iter()
                    .map(|v| 1.0 / (v.as_f64() + stats.eps).sqrt())
                    .collect(),
            )
        };

        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for i in 0..n {
            for ch in 0..c {
                let (m, s) = (T::from_f64(mean[ch]), T::from_f64(inv_std[ch]));
                let (g, b) = (gamma.data()[ch], beta.data()[ch]);
                let base = index(i, ch);
                for j in base..base + hw {
                    let xh = (x[j] - m) * s;
                    xhat[j] = xh;
                    y[j] = g * xh + b;
                }
            }
        }

        let gam = gamma.data().to_vec();
        let (gx, gg, gb) = (self.requires_grad(), gamma.requires_grad(), beta.requires_grad());
        Ok(Tensor::from_op(
            "batch_norm",
            vec![n, c, h, w],
            y,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g| {
                let mut dgamma = vec![0.0f64; c];
                let mut dbeta = vec![0.0f64; c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = index(i, ch);
                        for j in base..base + hw {
                            dgamma[ch] += (g[j] * xhat[j]).as_f64();
                            dbeta[ch] += g[j].as_f64();
                        }
                    }
                }
                let dx = gx.then(|| {
                    let mut dx = vec![T::zero(); g.len()];
                    for ch in 0..c {
                        let scale = gam[ch].as_f64() * inv_std[ch];
                        if training {
                            // dx = γ/σ · (g - mean(g) - x̂·mean(g·x̂))
                            let mg = dbeta[ch] / count as f64;
                            let mgx = dgamma[ch] / count as f64;
                            for i in 0..n {
                                let base = index(i, ch);
                                for j in base..base + hw {
                                    let v = g[j].as_f64() - mg - xhat[j].as_f64() * mgx;
                                    dx[j] = T::from_f64(scale * v);
                                }
                            }
                        } else {
                            let s = T::from_f64(scale);
                            for i in 0..n {
                                let base = index(i, ch);
                                for j in base..base + hw {
                                    dx[j] = g[j] * s;
                                }
                            }
                        }
                    }
                    dx
                });
                let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect();
                vec![dx, gg.then(|| cast(dgamma)), gb.then(|| cast(dbeta))]
            },
        ))
    }
}
