//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's own metric or knee code.

#![allow(dead_code)]

pub mod grad_cases;
pub mod persist;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcl::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Relative error with a floor on the magnitude, so that gradients that are
/// essentially zero are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative error between the analytic gradient of
/// `sum(f(inputs) * probe)` and central differences, over every input.
/// Inputs with more than `max_coords` entries are checked on a random subset.
pub fn gradcheck<F>(inputs: &[(Vec<usize>, Vec<f64>)], f: F, seed: u64, max_coords: usize) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let mut r = rng(seed ^ 0x9e37_79b9);
    let params: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(s, d)| Tensor::param(s, d.clone()).unwrap())
        .collect();
    let out = f(&params);
    let probe = uniform(&mut r, out.numel(), 0.5, 1.5);
    let probe_t = Tensor::new(out.shape(), probe.clone()).unwrap();
    out.mul(&probe_t).unwrap().sum().backward().unwrap();

    let value = |xs: &[Tensor<f64>]| -> f64 {
        f(xs).data().iter().zip(&probe).map(|(a, b)| a * b).sum()
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (k, (shape, data)) in inputs.iter().enumerate() {
        let analytic = params[k].grad().expect("input reached by backward");
        let coords: Vec<usize> = if data.len() <= max_coords {
            (0..data.len()).collect()
        } else {
            (0..max_coords).map(|_| r.gen_range(0..data.len())).collect()
        };
        for i in coords {
            let at = |delta: f64| {
                let xs: Vec<Tensor<f64>> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (s, d))| {
                        let mut d = d.clone();
                        if j == k {
                            d[i] += delta;
                        }
                        Tensor::new(if j == k { shape } else { s }, d).unwrap()
                    })
                    .collect();
                value(&xs)
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    worst
}

// ---- image quality oracles: plain loops over [C][H][W] arrays -------------

pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

pub fn gauss2d(size: usize, sigma: f64) -> Vec<Vec<f64>> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w = vec![vec![0.0; size]; size];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-r2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in &mut w {
        for v in row {
            *v /= total;
        }
    }
    w
}

/// Mean SSIM and mean contrast-structure over all valid windows of one channel.
pub fn ssim_plane(x: &[Vec<f64>], y: &[Vec<f64>], window: usize) -> (f64, f64) {
    let g = gauss2d(window, 1.5);
    let (h, w) = (x.len(), x[0].len());
    let (c1, c2) = (K1 * K1, K2 * K2);
    let (mut s_sum, mut cs_sum, mut n) = (0.0, 0.0, 0.0);
    for i in 0..=h - window {
        for j in 0..=w - window {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for a in 0..window {
                for b in 0..window {
                    let (p, q, wt) = (x[i + a][j + b], y[i + a][j + b], g[a][b]);
                    mx += wt * p;
                    my += wt * q;
                    xx += wt * p * p;
                    yy += wt * q * q;
                    xy += wt * p * q;
                }
            }
            let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
            let cs = (2.0 * cov + c2) / (vx + vy + c2);
            let lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            s_sum += lum * cs;
            cs_sum += cs;
            n += 1.0;
        }
    }
    (s_sum / n, cs_sum / n)
}

pub type Planes = Vec<Vec<Vec<f64>>>;

pub fn planes(c: usize, h: usize, w: usize, flat: &[f64]) -> Planes {
    (0..c)
        .map(|ch| (0..h).map(|i| flat[(ch * h + i) * w..(ch * h + i + 1) * w].to_vec()).collect())
        .collect()
}

pub fn ssim_oracle(x: &Planes, y: &Planes) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(a, b)| ssim_plane(a, b, 11).0).sum();
    s / x.len() as f64
}

fn halve(p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..p.len() / 2)
        .map(|i| {
            (0..p[0].len() / 2)
                .map(|j| (p[2 * i][2 * j] + p[2 * i + 1][2 * j] + p[2 * i][2 * j + 1] + p[2 * i + 1][2 * j + 1]) / 4.0)
                .collect()
        })
        .collect()
}

/// MS-SSIM per channel with renormalized standard exponents, windows
/// shrinking to the largest odd size that fits, averaged over channels.
pub fn ms_ssim_oracle(x: &Planes, y: &Planes, scales: usize) -> f64 {
    let base = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let total: f64 = base[..scales].iter().sum();
    let mut acc = 0.0;
    for (px, py) in x.iter().zip(y) {
        let (mut a, mut b) = (px.clone(), py.clone());
        let mut prod = 1.0;
        for (s, wt) in base[..scales].iter().enumerate() {
            let side = a.len().min(a[0].len());
            let win = if side >= 11 { 11 } else if side % 2 == 1 { side } else { side - 1 };
            let (ssim, cs) = ssim_plane(&a, &b, win);
            let term = if s + 1 == scales { ssim } else { cs };
            prod *= term.max(1e-6).powf(wt / total);
            a = halve(&a);
            b = halve(&b);
        }
        acc += prod;
    }
    acc / x.len() as f64
}

pub fn mse_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - y[i]) * (x[i] - y[i]);
    }
    s / x.len() as f64
}

pub fn psnr_oracle(x: &[f64], y: &[f64]) -> f64 {
    let m = mse_oracle(x, y);
    if m == 0.0 {
        100.0
    } else {
        (-10.0 * m.log10()).min(100.0)
    }
}

pub fn bce_oracle(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        let q = p[i].clamp(1e-7, 1.0 - 1e-7);
        s -= t[i] * q.ln() + (1.0 - t[i]) * (1.0 - q).ln();
    }
    s / p.len() as f64
}

// ---- knee oracle -----------------------------------------------------------

/// Index of maximum discrete curvature of the curve rescaled to the unit
/// square, or `None` when the curve has no bend.
pub fn max_curvature_knee(y: &[f64]) -> Option<usize> {
    let n = y.len();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if n < 3 || hi - lo <= 0.0 {
        return None;
    }
    let dx = 1.0 / (n - 1) as f64;
    let yn: Vec<f64> = y.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let mut best: Option<(usize, f64)> = None;
    for i in 1..n - 1 {
        let d1 = (yn[i + 1] - yn[i - 1]) / (2.0 * dx);
        let d2 = (yn[i + 1] - 2.0 * yn[i] + yn[i - 1]) / (dx * dx);
        let k = d2.abs() / (1.0 + d1 * d1).powf(1.5);
        if best.map_or(true, |(_, b)| k > b) {
            best = Some((i, k));
        }
    }
    best.filter(|&(_, k)| k > 1e-6).map(|(i, _)| i)
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub kind: &'static str,
    pub values: Vec<f64>,
}

/// Decreasing loss-like curves: hyperbolic, exponential, two-piece linear and
/// straight lines, with shapes drawn from fixed ranges.
pub fn knee_curves(seed: u64) -> Vec<Curve> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for k in 0..50 {
        let n = r.gen_range(40..=80);
        let scale = r.gen_range(0.5..3.0);
        let floor = r.gen_range(0.0..0.5);
        let (kind, values): (&'static str, Vec<f64>) = match k % 4 {
            0 => {
                let c = r.gen_range(1.0..8.0);
                ("hyperbolic", (0..n).map(|i| floor + scale / (i as f64 + c)).collect())
            }
            1 => {
                let tau = r.gen_range(2.0..10.0);
                ("exponential", (0..n).map(|i| floor + scale * (-(i as f64) / tau).exp()).collect())
            }
            2 => {
                let corner = r.gen_range(n / 5..n * 3 / 5);
                let steep = r.gen_range(0.05..0.2);
                let flat = steep * r.gen_range(0.02..0.2);
                let v = (0..n)
                    .map(|i| {
                        let i = i as f64;
                        let c = corner as f64;
                        if i <= c {
                            floor + scale - steep * i
                        } else {
                            floor + scale - steep * c - flat * (i - c)
                        }
                    })
                    .collect();
                ("piecewise", v)
            }
            _ => {
                let slope = r.gen_range(0.005..0.05);
                ("linear", (0..n).map(|i| floor + scale - slope * i as f64).collect())
            }
        };
        out.push(Curve { kind, values });
    }
    out
}
