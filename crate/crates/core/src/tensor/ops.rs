//! Elementwise arithmetic, activations and reductions.

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Probability clamp used by binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("left is {:?}, right is {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn sum_f64<T: Real>(xs: &[T]) -> f64 {
    xs.iter().map(|v| v.as_f64()).sum()
}

impl<T: Real> Tensor<T> {
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Self {
        let x = self.data().to_vec();
        let y: Vec<T> = x.iter().map(|&v| f(v)).collect();
        let y_saved = y.clone();
        Tensor::from_op(op, self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let dx = g
                .iter()
                .zip(x.iter().zip(&y_saved))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(dx)]
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("add", self, other)?;
        let y = self.data().iter().zip(other.data()).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(
            "add",
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("sub", self, other)?;
        let y = self.data().iter().zip(other.data()).map(|(&a, &b)| a - b).collect();
        Ok(Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
        ))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("mul", self, other)?;
        let a = self.data().to_vec();
        let b = other.data().to_vec();
        let y = a.iter().zip(&b).map(|(&a, &b)| a * b).collect();
        let (ga, gb) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            move |g| {
                vec![
                    ga.then(|| g.iter().zip(&b).map(|(&g, &b)| g * b).collect()),
                    gb.then(|| g.iter().zip(&a).map(|(&g, &a)| g * a).collect()),
                ]
            },
        ))
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Self> {
        same_shape("div", self, other)?;
        let a = self.data().to_vec();
        let b = other.data().to_vec();
        let y = a.iter().zip(&b).map(|(&a, &b)| a / b).collect();
        let (ga, gb) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(
            "div",
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            move |g| {
                vec![
                    ga.then(|| g.iter().zip(&b).map(|(&g, &b)| g / b).collect()),
                    gb.then(|| {
                        g.iter()
                            .zip(a.iter().zip(&b))
                            .map(|(&g, (&a, &b))| -g * a / (b * b))
                            .collect()
                    }),
                ]
            },
        ))
    }

    pub fn add_scalar(&self, c: T) -> Self {
        self.unary("add_scalar", |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Self {
        self.unary("mul_scalar", |x| x * c, move |_, _| c)
    }

    /// `c - x`
    pub fn rsub_scalar(&self, c: T) -> Self {
        self.unary("rsub_scalar", |x| c - x, |_, _| -T::one())
    }

    pub fn square(&self) -> Self {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    pub fn sqrt(&self) -> Self {
        let half = T::from_f64(0.5);
        // zero at the origin rather than infinite
        self.unary("sqrt", |x| x.sqrt(), move |_, y| {
            if y > T::zero() {
                half / y
            } else {
                T::zero()
            }
        })
    }

    /// `x^p` for a positive base.
    pub fn powf(&self, p: T) -> Self {
        self.unary("powf", |x| x.powf(p), move |x, y| p * y / x)
    }

    /// Clamps to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&self, lo: T, hi: T) -> Self {
        self.unary(
            "clamp",
            |x| x.max(lo).min(hi),
            move |x, _| if x < lo || x > hi { T::zero() } else { T::one() },
        )
    }

    /// Elementwise `max(x, slope·x)`. At zero the derivative is `slope`.
    pub fn leaky_relu(&self, slope: T) -> Self {
        self.unary(
            "leaky_relu",
            |x| if x > T::zero() { x } else { slope * x },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    /// Logistic function, evaluated without overflow for large `|x|`.
    pub fn sigmoid(&self) -> Self {
        self.unary("sigmoid", stable_sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn sum(&self) -> Self {
        let total = T::from_f64(sum_f64(self.data()));
        let n = self.numel();
        Tensor::from_op("sum", vec![1], vec![total], vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Self {
        let n = self.numel();
        let mean = T::from_f64(sum_f64(self.data()) / n as f64);
        Tensor::from_op("mean", vec![1], vec![mean], vec![self.clone()], move |g| {
            vec![Some(vec![g[0] / T::from_f64(n as f64); n])]
        })
    }

    /// Mean over the trailing two axes: `[N, C, H, W] -> [N, C]`.
    pub fn mean_spatial(&self) -> Result<Self> {
        let &[n, c, h, w] = self.shape() else {
            return Err(Error::shape(
                "mean_spatial",
                format!("expected [N,C,H,W], got {:?}", self.shape()),
            ));
        };
        let plane = h * w;
        let y = self
            .data()
            .chunks(plane)
            .map(|p| T::from_f64(sum_f64(p) / plane as f64))
            .collect();
        let inv = T::from_f64(1.0 / plane as f64);
        Ok(Tensor::from_op("mean_spatial", vec![n, c], y, vec![self.clone()], move |g| {
            let mut dx = Vec::with_capacity(n * c * plane);
            for &gi in g {
                dx.extend(std::iter::repeat(gi * inv).take(plane));
            }
            vec![Some(dx)]
        }))
    }

    /// Concatenates `[N, Ca, H, W]` and `[N, Cb, H, W]` along channels.
    pub fn concat_channels(&self, other: &Tensor<T>) -> Result<Self> {
        let (&[n, ca, h, w], &[nb, cb, hb, wb]) = (self.shape(), other.shape()) else {
            return Err(Error::shape(
                "concat_channels",
                format!("expected 4-d inputs, got {:?} and {:?}", self.shape(), other.shape()),
            ));
        };
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!(
                    "batch/spatial dims differ: {:?} vs {:?}",
                    self.shape(),
                    other.shape()
                ),
            ));
        }
        let (sa, sb) = (ca * h * w, cb * h * w);
        let mut y = Vec::with_capacity(n * (sa + sb));
        for i in 0..n {
            y.extend_from_slice(&self.data()[i * sa..(i + 1) * sa]);
            y.extend_from_slice(&other.data()[i * sb..(i + 1) * sb]);
        }
        let (ga, gb) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(
            "concat_channels",
            vec![n, ca + cb, h, w],
            y,
            vec![self.clone(), other.clone()],
            move |g| {
                let mut da = Vec::with_capacity(if ga { n * sa } else { 0 });
                let mut db = Vec::with_capacity(if gb { n * sb } else { 0 });
                for chunk in g.chunks(sa + sb) {
                    if ga {
                        da.extend_from_slice(&chunk[..sa]);
                    }
                    if gb {
                        db.extend_from_slice(&chunk[sa..]);
                    }
                }
                vec![ga.then_some(da), gb.then_some(db)]
            },
        ))
    }

    /// Mean binary cross-entropy between probabilities and `{0, 1}` targets.
    ///
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]` so the loss is always
    /// finite; inside the clamp the gradient is `(p - y) / (p (1 - p) n)`.
    pub fn binary_cross_entropy(&self, targets: &Tensor<T>) -> Result<Self> {
        same_shape("binary_cross_entropy", self, targets)?;
        let lo = BCE_CLAMP;
        let hi = 1.0 - BCE_CLAMP;
        let p = self.data().to_vec();
        let y = targets.data().to_vec();
        let n = p.len();
        let total: f64 = p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| {
                let p = p.as_f64().clamp(lo, hi);
                let y = y.as_f64();
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let loss = T::from_f64(total / n as f64);
        Ok(Tensor::from_op(
            "binary_cross_entropy",
            vec![1],
            vec![loss],
            vec![self.clone(), targets.clone()],
            move |g| {
                let scale = g[0].as_f64() / n as f64;
                let dp = p
                    .iter()
                    .zip(&y)
                    .map(|(&p, &y)| {
                        let p = p.as_f64();
                        if p < lo || p > hi {
                            return T::zero();
                        }
                        T::from_f64(scale * (p - y.as_f64()) / (p * (1.0 - p)))
                    })
                    .collect();
                vec![Some(dp), None]
            },
        ))
    }
}

#[inline]
pub(crate) fn stable_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
