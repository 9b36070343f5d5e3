mod common;

use common::*;
use rand::Rng;
use stcl::data::Image;
use stcl::metrics::{self, auto_scales, Scales};

const TOL: f64 = 1e-6;

fn random_image(r: &mut rand_chacha::ChaCha8Rng, c: usize, h: usize, w: usize) -> Image {
    Image::new(c, h, w, (0..c * h * w).map(|_| r.gen::<f32>()).collect()).unwrap()
}

/// A noisy copy, so SSIM lands somewhere in the middle of its range.
fn perturbed(r: &mut rand_chacha::ChaCha8Rng, img: &Image, amp: f32) -> Image {
    let data = img.data.iter().map(|v| (v + r.gen_range(-amp..amp)).clamp(0.0, 1.0)).collect();
    Image::new(img.channels, img.height, img.width, data).unwrap()
}

fn as_f64(img: &Image) -> Vec<f64> {
    img.data.iter().map(|&v| v as f64).collect()
}

fn as_planes(img: &Image) -> Planes {
    planes(img.channels, img.height, img.width, &as_f64(img))
}

#[test]
fn ssim_matches_direct_summation() {
    let mut r = rng(1);
    for k in 0..8 {
        let (h, w) = (r.gen_range(11..24), r.gen_range(11..24));
        let x = random_image(&mut r, 1 + k % 3, h, w);
        let y = perturbed(&mut r, &x, 0.05 + 0.1 * k as f32);
        let got = metrics::ssim(&x, &y).unwrap();
        let want = ssim_oracle(&as_planes(&x), &as_planes(&y));
        assert!((got - want).abs() < TOL, "{h}x{w}: {got} vs {want}");
    }
}

#[test]
fn ssim_of_constant_images_has_closed_form() {
    for &(a, b) in &[(0.2f32, 0.2f32), (0.1, 0.9), (0.5, 0.45), (0.0, 1.0)] {
        let x = Image::filled(3, 16, 16, a);
        let y = Image::filled(3, 16, 16, b);
        let (a, b) = (a as f64, b as f64);
        let c1 = K1 * K1;
        let want = (2.0 * a * b + c1) / (a * a + b * b + c1);
        let got = metrics::ssim(&x, &y).unwrap();
        assert!((got - want).abs() < TOL, "({a},{b}): {got} vs {want}");
    }
}

#[test]
fn ms_ssim_matches_direct_summation() {
    let mut r = rng(2);
    for &(h, w) in &[(32, 32), (40, 33), (64, 48), (17, 29)] {
        let x = random_image(&mut r, 3, h, w);
        let y = perturbed(&mut r, &x, 0.15);
        let scales = auto_scales(h.min(w));
        let got = metrics::ms_ssim(&x, &y, Scales::Auto).unwrap();
        let want = ms_ssim_oracle(&as_planes(&x), &as_planes(&y), scales);
        assert!((got - want).abs() < TOL, "{h}x{w} ({scales} scales): {got} vs {want}");
    }
}

#[test]
fn single_scale_ms_ssim_reduces_to_ssim() {
    let mut r = rng(3);
    for _ in 0..5 {
        let x = random_image(&mut r, 1, 20, 20);
        let y = perturbed(&mut r, &x, 0.2);
        let ms = metrics::ms_ssim(&x, &y, Scales::Fixed(1)).unwrap();
        let s = metrics::ssim(&x, &y).unwrap();
        assert!((ms - s).abs() < TOL, "{ms} vs {s}");
    }
}

#[test]
fn psnr_and_rmse_match_direct_sums() {
    let mut r = rng(4);
    for k in 0..10 {
        let x = random_image(&mut r, 3, 12, 9);
        let y = perturbed(&mut r, &x, 0.01 * (k + 1) as f32);
        let (xf, yf) = (as_f64(&x), as_f64(&y));
        assert!((metrics::psnr(&x, &y).unwrap() - psnr_oracle(&xf, &yf)).abs() < TOL);
        assert!((metrics::rmse(&x, &y).unwrap() - mse_oracle(&xf, &yf).sqrt()).abs() < TOL);
    }
    let x = random_image(&mut r, 1, 11, 11);
    assert_eq!(metrics::psnr(&x, &x).unwrap(), 100.0);
}

#[test]
fn bce_matches_direct_sum() {
    let mut r = rng(5);
    for _ in 0..10 {
        let n = r.gen_range(1..200);
        let p: Vec<f32> = (0..n).map(|_| r.gen::<f32>()).collect();
        let t: Vec<f32> = (0..n).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let pf: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let got = metrics::bce(&p, &t).unwrap();
        let want = bce_oracle(&pf, &tf);
        assert!((got - want).abs() < TOL, "{got} vs {want}");
    }
    // saturated predictions hit the clamp instead of infinity
    let got = metrics::bce(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
    assert!((got - (-(1e-7f64).ln())).abs() < 1e-6);
}

#[test]
fn bit_accuracy_counts_agreement() {
    let acc = metrics::bit_accuracy(&[0.9, 0.2, 0.5, 0.49], &[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(acc, 0.75);
}
