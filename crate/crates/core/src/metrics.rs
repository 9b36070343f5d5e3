//! Image quality and decoding metrics.
//!
//! SSIM, MS-SSIM and RMSE are written as compositions of differentiable
//! tensor operations. The loss terms used during training and the numbers
//! reported at evaluation time therefore come from the same functions; the
//! `*_tensor` variants are the differentiable entry points and the plain
//! functions evaluate them at 64-bit on [`Image`]s.

use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Per-scale exponents for five-scale MS-SSIM, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Smallest side length a scale may have in auto mode.
pub const MS_SSIM_MIN_SIDE: usize = 8;
pub const PSNR_CAP_DB: f64 = 100.0;

// Keeps fractional powers of contrast-structure terms real-valued.
const MS_SSIM_FLOOR: f64 = 1e-6;

/// Quality of a stego batch relative to its covers plus decoding accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim: f64,
    pub msssim: f64,
    pub psnr: f64,
    pub rmse: f64,
    pub accuracy: f64,
}

impl MetricReport {
    /// Elementwise mean of several reports.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let n = reports.len().max(1) as f64;
        let mut acc = MetricReport::default();
        for r in reports {
            acc.ssim += r.ssim;
            acc.msssim += r.msssim;
            acc.psnr += r.psnr;
            acc.rmse += r.rmse;
            acc.accuracy += r.accuracy;
        }
        MetricReport {
            ssim: acc.ssim / n,
            msssim: acc.msssim / n,
            psnr: acc.psnr / n,
            rmse: acc.rmse / n,
            accuracy: acc.accuracy / n,
        }
    }
}

/// Number of scales for MS-SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scales {
    /// As many of the five standard scales as the image supports.
    Auto,
    Fixed(usize),
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps<T: Real>(size: usize, sigma: f64) -> Vec<T> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::from_f64(v / total)).collect()
}

/// Local SSIM and contrast-structure maps for `[N, C, H, W]` inputs.
fn ssim_maps<T: Real>(x: &Tensor<T>, y: &Tensor<T>, window: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    if x.shape() != y.shape() {
        return Err(Error::shape(
            "ssim",
            format!("images differ: {:?} vs {:?}", x.shape(), y.shape()),
        ));
    }
    let taps = gaussian_taps::<T>(window, SSIM_SIGMA);
    let blur = |t: &Tensor<T>| t.separable_filter_valid(&taps);
    let c1 = T::from_f64(SSIM_K1 * SSIM_K1);
    let c2 = T::from_f64(SSIM_K2 * SSIM_K2);
    let two = T::from_f64(2.0);

    let mu_x = blur(x)?;
    let mu_y = blur(y)?;
    let mu_xx = mu_x.mul(&mu_x)?;
    let mu_yy = mu_y.mul(&mu_y)?;
    let mu_xy = mu_x.mul(&mu_y)?;
    let var_x = blur(&x.mul(x)?)?.sub(&mu_xx)?;
    let var_y = blur(&y.mul(y)?)?.sub(&mu_yy)?;
    let cov = blur(&x.mul(y)?)?.sub(&mu_xy)?;

    let cs = cov
        .mul_scalar(two)
        .add_scalar(c2)
        .div(&var_x.add(&var_y)?.add_scalar(c2))?;
    let lum = mu_xy
        .mul_scalar(two)
        .add_scalar(c1)
        .div(&mu_xx.add(&mu_yy)?.add_scalar(c1))?;
    Ok((lum.mul(&cs)?, cs))
}

fn check_window<T: Real>(x: &Tensor<T>, window: usize) -> Result<()> {
    match *x.shape() {
        [_, _, h, w] if h >= window && w >= window => Ok(()),
        [_, _, h, w] => Err(Error::Invalid(format!(
            "{h}x{w} image is smaller than the {window}x{window} SSIM window"
        ))),
        ref s => Err(Error::shape("ssim", format!("expected [N,C,H,W], got {s:?}"))),
    }
}

/// Mean SSIM over all windows, channels and batch items.
pub fn ssim_tensor<T: Real>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    check_window(x, SSIM_WINDOW)?;
    let (map, _) = ssim_maps(x, y, SSIM_WINDOW)?;
    Ok(map.mean())
}

/// Scale count that auto mode picks for a given smaller image side.
pub fn auto_scales(min_side: usize) -> usize {
    let mut scales = 0;
    let mut side = min_side;
    while scales < MS_SSIM_WEIGHTS.len() && side >= MS_SSIM_MIN_SIDE {
        scales += 1;
        side /= 2;
    }
    scales
}

/// Exponents for the first `scales` scales, renormalized to sum to one.
pub fn ms_ssim_weights(scales: usize) -> Vec<f64> {
    let w = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Window used at a scale whose smaller side is `side`: the standard 11 taps,
/// shrunk to the largest odd size that fits when the scale is smaller.
fn window_for(side: usize) -> usize {
    if side >= SSIM_WINDOW {
        SSIM_WINDOW
    } else if side % 2 == 1 {
        side
    } else {
        side - 1
    }
}

/// Multi-scale SSIM: product of per-scale contrast-structure means and the
/// coarsest-scale SSIM mean, each raised to its (renormalized) exponent,
/// computed per image and channel and then averaged.
pub fn ms_ssim_tensor<T: Real>(x: &Tensor<T>, y: &Tensor<T>, scales: Scales) -> Result<Tensor<T>> {
    let &[_, _, h, w] = x.shape() else {
        return Err(Error::shape(
            "ms_ssim",
            format!("expected [N,C,H,W], got {:?}", x.shape()),
        ));
    };
    let min_side = h.min(w);
    let count = match scales {
        Scales::Auto => {
            let n = auto_scales(min_side);
            if n == 0 {
                return Err(Error::Invalid(format!(
                    "{h}x{w} image is too small for MS-SSIM (need at least {MS_SSIM_MIN_SIDE} px)"
                )));
            }
            n
        }
        Scales::Fixed(n) => {
            if n == 0 || n > MS_SSIM_WEIGHTS.len() {
                return Err(Error::Invalid(format!("MS-SSIM scales must be 1..=5, got {n}")));
            }
            if n > auto_scales(min_side) {
                return Err(Error::Invalid(format!(
                    "{h}x{w} image supports at most {} MS-SSIM scales, {n} requested",
                    auto_scales(min_side)
                )));
            }
            n
        }
    };
    let weights = ms_ssim_weights(count);
    let floor = T::from_f64(MS_SSIM_FLOOR);
    let big = T::from_f64(f64::MAX);

    let (mut xs, mut ys) = (x.clone(), y.clone());
    let mut side = min_side;
    let mut acc: Option<Tensor<T>> = None;
    for (s, &wt) in weights.iter().enumerate() {
        let (ssim_map, cs_map) = ssim_maps(&xs, &ys, window_for(side))?;
        let last = s + 1 == count;
        let term = if last { ssim_map } else { cs_map };
        let factor = term
            .mean_spatial()?
            .clamp(floor, big)
            .powf(T::from_f64(wt));
        acc = Some(match acc {
            None => factor,
            Some(a) => a.mul(&factor)?,
        });
        if !last {
            xs = xs.avg_pool2()?;
            ys = ys.avg_pool2()?;
            side /= 2;
        }
    }
    Ok(acc.expect("at least one scale").mean())
}

/// `sqrt(mean((x - y)²))`.
pub fn rmse_tensor<T: Real>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(x.sub(y)?.square().mean().sqrt())
}

fn to_tensor(img: &Image) -> Tensor<f64> {
    Tensor::new(
        &[1, img.channels, img.height, img.width],
        img.data.iter().map(|&v| v as f64).collect(),
    )
    .expect("image buffer matches its dimensions")
}

fn same_dims(op: &'static str, x: &Image, y: &Image) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::shape(
            op,
            format!("images differ: {:?} vs {:?}", x.dims(), y.dims()),
        ));
    }
    Ok(())
}

pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    same_dims("ssim", x, y)?;
    ssim_tensor(&to_tensor(x), &to_tensor(y))?.item()
}

pub fn ms_ssim(x: &Image, y: &Image, scales: Scales) -> Result<f64> {
    same_dims("ms_ssim", x, y)?;
    ms_ssim_tensor(&to_tensor(x), &to_tensor(y), scales)?.item()
}

pub fn rmse(x: &Image, y: &Image) -> Result<f64> {
    same_dims("rmse", x, y)?;
    rmse_tensor(&to_tensor(x), &to_tensor(y))?.item()
}

pub fn mse(x: &[f32], y: &[f32]) -> f64 {
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    total / x.len().max(1) as f64
}

/// Peak signal-to-noise ratio for peak value 1, capped at 100 dB.
pub fn psnr(x: &Image, y: &Image) -> Result<f64> {
    same_dims("psnr", x, y)?;
    Ok(psnr_from_mse(mse(&x.data, &y.data)))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// Mean binary cross-entropy with probabilities clamped at `1e-7`.
pub fn bce(probs: &[f32], targets: &[f32]) -> Result<f64> {
    let p = Tensor::new(&[probs.len()], probs.iter().map(|&v| v as f64).collect())?;
    let y = Tensor::new(&[targets.len()], targets.iter().map(|&v| v as f64).collect())?;
    p.binary_cross_entropy(&y)?.item()
}

/// Fraction of positions where `p >= 0.5` agrees with the target bit.
pub fn bit_accuracy(probs: &[f32], targets: &[f32]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::shape(
            "bit_accuracy",
            format!("{} probabilities vs {} targets", probs.len(), targets.len()),
        ));
    }
    let hits = probs
        .iter()
        .zip(targets)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    Ok(hits as f64 / probs.len().max(1) as f64)
}

/// Full report for one cover/stego pair and its decoded bits.
pub fn report(cover: &Image, stego: &Image, probs: &[f32], bits: &[f32]) -> Result<MetricReport> {
    Ok(MetricReport {
        ssim: ssim(cover, stego)?,
        msssim: ms_ssim(cover, stego, Scales::Auto)?,
        psnr: psnr(cover, stego)?,
        rmse: rmse(cover, stego)?,
        accuracy: bit_accuracy(probs, bits)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f32, size: usize) -> Image {
        Image::filled(3, size, size, v)
    }

    #[test]
    fn psnr_analytic_values() {
        let a = constant(0.5, 16);
        let b = constant(0.6, 16);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let black = constant(0.0, 16);
        let white = constant(1.0, 16);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
    }

    #[test]
    fn rmse_uniform_difference() {
        let a = constant(0.2, 12);
        let b = constant(0.3, 12);
        assert!((rmse(&a, &b).unwrap() - 0.1).abs() < 1e-7);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_conventions() {
        let y = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(bit_accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(bit_accuracy(&[0.0, 1.0, 0.0, 1.0], &y).unwrap(), 0.0);
        assert_eq!(bit_accuracy(&[0.5], &[1.0]).unwrap(), 1.0);
        assert_eq!(bit_accuracy(&[0.5], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn small_image_rejected() {
        let a = constant(0.5, 8);
        assert!(matches!(ssim(&a, &a), Err(Error::Invalid(_))));
        assert!(matches!(ms_ssim(&a, &a, Scales::Fixed(2)), Err(Error::Invalid(_))));
        assert!(ms_ssim(&a, &a, Scales::Auto).is_ok());
    }

    #[test]
    fn auto_scale_counts() {
        assert_eq!(auto_scales(32), 3);
        assert_eq!(auto_scales(128), 5);
        assert_eq!(auto_scales(7), 0);
        let w = ms_ssim_weights(3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[0] - 0.0448 / 0.6305).abs() < 1e-12);
    }

    #[test]
    fn identity_scores() {
        let data: Vec<f32> = (0..3 * 32 * 32).map(|i| ((i * 7919) % 101) as f32 / 100.0).collect();
        let x = Image::new(3, 32, 32, data).unwrap();
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        assert_eq!(ms_ssim(&x, &x, Scales::Auto).unwrap(), 1.0);
    }
}
