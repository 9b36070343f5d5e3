//! Spatial operators: same-size convolution, separable valid filtering and
//! 2×2 average pooling.

use super::{Real, Tensor};
use crate::error::{Error, Result};

fn dims4<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(Error::shape(op, format!("expected [N,C,H,W], got {s:?}"))),
    }
}

/// Unfolds one `[C, H, W]` image into a `[C·k·k, H·W]` patch matrix with
/// zero padding `k / 2`.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut col[((ci * k + ki) * k + kj) * hw..][..hw];
                let dy = ki as isize - pad;
                let dx = kj as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xo, o) in out.iter_mut().enumerate() {
                        let sx = xo as isize + dx;
                        *o = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &col[((ci * k + ki) * k + kj) * hw..][..hw];
                let dy = ki as isize - pad;
                let dxo = kj as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src = &row[y * w..(y + 1) * w];
                    let x_lo = (-dxo).max(0) as usize;
                    let x_hi = (w as isize - dxo).min(w as isize) as usize;
                    for xo in x_lo..x_hi {
                        dst[(xo as isize + dxo) as usize] += src[xo];
                    }
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Stride-1 cross-correlation with zero padding `k / 2`, so the output has
    /// the input's spatial size. `kernel` is `[K, C, k, k]` with odd `k`;
    /// `bias`, when given, is `[K]`.
    pub fn conv2d(&self, kernel: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Self> {
        let [n, c, h, w] = dims4("conv2d", self)?;
        let [kout, kc, kh, kw] = dims4("conv2d kernel", kernel)?;
        if kc != c {
            return Err(Error::shape(
                "conv2d",
                format!("input has C={c} channels but kernel expects {kc}"),
            ));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square and odd, got {kh}x{kw}"),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [kout] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias shape {:?} does not match K={kout}", b.shape()),
                ));
            }
        }
        let k = kh;
        let hw = h * w;
        let ckk = c * k * k;
        let x = self.data();
        let wt = kernel.data().to_vec();

        let mut cols = vec![T::zero(); n * ckk * hw];
        let mut y = vec![T::zero(); n * kout * hw];
        for i in 0..n {
            let col = &mut cols[i * ckk * hw..(i + 1) * ckk * hw];
            im2col(&x[i * c * hw..(i + 1) * c * hw], c, h, w, k, col);
            let out = &mut y[i * kout * hw..(i + 1) * kout * hw];
            if let Some(b) = bias {
                for (ko, row) in out.chunks_mut(hw).enumerate() {
                    row.fill(b.data()[ko]);
                }
            }
            T::gemm(
                kout,
                ckk,
                hw,
                &wt,
                (ckk as isize, 1),
                col,
                (hw as isize, 1),
                T::one(),
                out,
                hw,
            );
        }

        let mut parents = vec![self.clone(), kernel.clone()];
        parents.extend(bias.cloned());
        let (gx, gw) = (self.requires_grad(), kernel.requires_grad());
        let gb = bias.is_some_and(Tensor::requires_grad);
        let has_bias = bias.is_some();
        Ok(Tensor::from_op(
            "conv2d",
            vec![n, kout, h, w],
            y,
            parents,
            move |g| {
                let mut dw = gw.then(|| vec![T::zero(); kout * ckk]);
                let mut dx = gx.then(|| vec![T::zero(); n * c * hw]);
                let mut dcol = vec![T::zero(); if gx { ckk * hw } else { 0 }];
                for i in 0..n {
                    let gi = &g[i * kout * hw..(i + 1) * kout * hw];
                    let col = &cols[i * ckk * hw..(i + 1) * ckk * hw];
                    if let Some(dw) = dw.as_mut() {
                        // dW += g_i · col_iᵀ
                        T::gemm(
                            kout,
                            hw,
                            ckk,
                            gi,
                            (hw as isize, 1),
                            col,
                            (1, hw as isize),
                            T::one(),
                            dw,
                            ckk,
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        // dcol = Wᵀ · g_i
                        T::gemm(
                            ckk,
                            kout,
                            hw,
                            &wt,
                            (1, ckk as isize),
                            gi,
                            (hw as isize, 1),
                            T::zero(),
                            &mut dcol,
                            hw,
                        );
                        col2im(&dcol, c, h, w, k, &mut dx[i * c * hw..(i + 1) * c * hw]);
                    }
                }
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(gb.then(|| {
                        let mut db = vec![0.0f64; kout];
                        for (j, row) in g.chunks(hw).enumerate() {
                            db[j % kout] += row.iter().map(|v| v.as_f64()).sum::<f64>();
                        }
                        db.into_iter().map(T::from_f64).collect()
                    }));
                }
                grads
            },
        ))
    }

    /// Separable "valid" filter applied independently to every `[H, W]`
    /// plane: `[N, C, H, W] -> [N, C, H-k+1, W-k+1]` for `k` taps.
    pub fn separable_filter_valid(&self, taps: &[T]) -> Result<Self> {
        let [n, c, h, w] = dims4("separable_filter_valid", self)?;
        let k = taps.len();
        if k == 0 || h < k || w < k {
            return Err(Error::shape(
                "separable_filter_valid",
                format!("{h}x{w} plane is smaller than the {k}-tap window"),
            ));
        }
        let (ho, wo) = (h - k + 1, w - k + 1);
        let planes = n * c;
        let x = self.data();
        let mut tmp = vec![T::zero(); planes * h * wo];
        let mut y = vec![T::zero(); planes * ho * wo];
        for p in 0..planes {
            let src = &x[p * h * w..(p + 1) * h * w];
            let mid = &mut tmp[p * h * wo..(p + 1) * h * wo];
            for r in 0..h {
                for xo in 0..wo {
                    let s = &src[r * w + xo..r * w + xo + k];
                    mid[r * wo + xo] = s.iter().zip(taps).map(|(&a, &t)| a * t).sum();
                }
            }
            let out = &mut y[p * ho * wo..(p + 1) * ho * wo];
            for yo in 0..ho {
                for xo in 0..wo {
                    let mut acc = T::zero();
                    for (t, &tap) in taps.iter().enumerate() {
                        acc += mid[(yo + t) * wo + xo] * tap;
                    }
                    out[yo * wo + xo] = acc;
                }
            }
        }
        let taps = taps.to_vec();
        Ok(Tensor::from_op(
            "separable_filter_valid",
            vec![n, c, ho, wo],
            y,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); planes * h * w];
                let mut dmid = vec![T::zero(); h * wo];
                for p in 0..planes {
                    let gp = &g[p * ho * wo..(p + 1) * ho * wo];
                    dmid.fill(T::zero());
                    for yo in 0..ho {
                        for xo in 0..wo {
                            let gv = gp[yo * wo + xo];
                            for (t, &tap) in taps.iter().enumerate() {
                                dmid[(yo + t) * wo + xo] += gv * tap;
                            }
                        }
                    }
                    let dp = &mut dx[p * h * w..(p + 1) * h * w];
                    for r in 0..h {
                        for xo in 0..wo {
                            let gv = dmid[r * wo + xo];
                            for (t, &tap) in taps.iter().enumerate() {
                                dp[r * w + xo + t] += gv * tap;
                            }
                        }
                    }
                }
                vec![Some(dx)]
            },
        ))
    }

    /// 2×2 mean pooling with stride 2; an odd trailing row/column is dropped.
    pub fn avg_pool2(&self) -> Result<Self> {
        let [n, c, h, w] = dims4("avg_pool2", self)?;
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(Error::shape("avg_pool2", format!("{h}x{w} is too small to pool")));
        }
        let planes = n * c;
        let quarter = T::from_f64(0.25);
        let x = self.data();
        let mut y = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let s = &x[p * h * w..(p + 1) * h * w];
            for yo in 0..ho {
                for xo in 0..wo {
                    let (r, q) = (2 * yo, 2 * xo);
                    y.push(
                        (s[r * w + q] + s[r * w + q + 1] + s[(r + 1) * w + q] + s[(r + 1) * w + q + 1])
                            * quarter,
                    );
                }
            }
        }
        Ok(Tensor::from_op(
            "avg_pool2",
            vec![n, c, ho, wo],
            y,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    let d = &mut dx[p * h * w..(p + 1) * h * w];
                    for yo in 0..ho {
                        for xo in 0..wo {
                            let v = g[(p * ho + yo) * wo + xo] * quarter;
                            let (r, q) = (2 * yo, 2 * xo);
                            d[r * w + q] += v;
                            d[r * w + q + 1] += v;
                            d[(r + 1) * w + q] += v;
                            d[(r + 1) * w + q + 1] += v;
                        }
                    }
                }
                vec![Some(dx)]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        let k = Tensor::new(&[1, 1, 3, 3], vec![0.7; 9]).unwrap();
        let b = Tensor::new(&[1], vec![0.25]).unwrap();
        let y = x.conv2d(&k, Some(&b)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn constant_input_ones_kernel_interior() {
        let c = 0.3f64;
        let x = Tensor::new(&[1, 1, 5, 5], vec![c; 25]).unwrap();
        let k = Tensor::new(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = x.conv2d(&k, None).unwrap();
        for r in 1..4 {
            for q in 1..4 {
                assert!((y.data()[r * 5 + q] - 9.0 * c).abs() < 1e-12);
            }
        }
        // corners only see four taps
        assert!((y.data()[0] - 4.0 * c).abs() < 1e-12);
    }

    #[test]
    fn one_hot_center_kernel_is_identity() {
        let data: Vec<f64> = (0..2 * 4 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Tensor::new(&[1, 2, 4, 4], data.clone()).unwrap();
        let mut kern = vec![0.0; 2 * 2 * 9];
        kern[4] = 1.0; // out 0 <- in 0 centre
        kern[27 + 4] = 1.0; // out 1 <- in 1 centre
        let k = Tensor::new(&[2, 2, 3, 3], kern).unwrap();
        let y = x.conv2d(&k, None).unwrap();
        assert_eq!(y.data(), data.as_slice());
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
        let k = Tensor::<f32>::zeros(&[8, 4, 3, 3]);
        let err = x.conv2d(&k, None).unwrap_err().to_string();
        assert!(err.contains("C=3") && err.contains('4'), "{err}");
    }

    #[test]
    fn filter_rejects_small_plane() {
        let x = Tensor::<f64>::zeros(&[1, 1, 8, 8]);
        assert!(x.separable_filter_valid(&[0.1; 11]).is_err());
    }

    #[test]
    fn pool_averages_blocks() {
        let x = Tensor::new(&[1, 1, 2, 4], vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(x.avg_pool2().unwrap().data(), &[2.0, 6.0]);
    }
}
