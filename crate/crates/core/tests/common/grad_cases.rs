//! One entry per differentiable operation: how to draw a random input and how
//! to apply the op to it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stcl::metrics::{ms_ssim_tensor, rmse_tensor, ssim_tensor, Scales};
use stcl::model::{composite_loss, LossWeights};
use stcl::tensor::{RunningStats, Tensor};

use super::uniform;

pub type Inputs = Vec<(Vec<usize>, Vec<f64>)>;
type Op = Box<dyn Fn(&[Tensor<f64>]) -> Tensor<f64>>;

pub struct GradCase {
    pub name: &'static str,
    /// Draws inputs and builds the op; constants of the op come from the same draw.
    pub draw: fn(&mut ChaCha8Rng) -> (Inputs, Op),
}

/// Values kept at least `gap` away from each point in `avoid`.
fn away_from(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, avoid: &[f64], gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let v = r.gen_range(lo..hi);
            if avoid.iter().all(|a| (v - a).abs() > gap) {
                break v;
            }
        })
        .collect()
}

fn small_4d(r: &mut ChaCha8Rng) -> Vec<usize> {
    vec![r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(3..=5), r.gen_range(3..=5)]
}

fn pair(shape: Vec<usize>, a: Vec<f64>, b: Vec<f64>) -> Inputs {
    vec![(shape.clone(), a), (shape, b)]
}

fn n_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn cases() -> Vec<GradCase> {
    vec![
        GradCase {
            name: "add",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (pair(s, uniform(r, n, -1.0, 1.0), uniform(r, n, -1.0, 1.0)), Box::new(|x| x[0].add(&x[1]).unwrap()))
            },
        },
        GradCase {
            name: "sub",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (pair(s, uniform(r, n, -1.0, 1.0), uniform(r, n, -1.0, 1.0)), Box::new(|x| x[0].sub(&x[1]).unwrap()))
            },
        },
        GradCase {
            name: "mul",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (pair(s, uniform(r, n, -1.0, 1.0), uniform(r, n, -1.0, 1.0)), Box::new(|x| x[0].mul(&x[1]).unwrap()))
            },
        },
        GradCase {
            name: "div",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                let den: Vec<f64> = uniform(r, n, 0.5, 2.0)
                    .into_iter()
                    .map(|v| if r.gen_bool(0.5) { v } else { -v })
                    .collect();
                (pair(s, uniform(r, n, -1.0, 1.0), den), Box::new(|x| x[0].div(&x[1]).unwrap()))
            },
        },
        GradCase {
            name: "scalar_affine",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                let (a, b, c) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
                (
                    vec![(s, uniform(r, n, -1.0, 1.0))],
                    Box::new(move |x| x[0].mul_scalar(a).add_scalar(b).rsub_scalar(c)),
                )
            },
        },
        GradCase {
            name: "square",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -2.0, 2.0))], Box::new(|x| x[0].square()))
            },
        },
        GradCase {
            name: "sqrt",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, 0.2, 3.0))], Box::new(|x| x[0].sqrt()))
            },
        },
        GradCase {
            name: "powf",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                let p = r.gen_range(0.05..2.5);
                (vec![(s, uniform(r, n, 0.2, 2.0))], Box::new(move |x| x[0].powf(p)))
            },
        },
        GradCase {
            name: "clamp",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                let v = away_from(r, n, -1.5, 1.5, &[-0.5, 0.7], 1e-3);
                (vec![(s, v)], Box::new(|x| x[0].clamp(-0.5, 0.7)))
            },
        },
        GradCase {
            name: "leaky_relu",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                let v = away_from(r, n, -2.0, 2.0, &[0.0], 1e-3);
                (vec![(s, v)], Box::new(|x| x[0].leaky_relu(0.01)))
            },
        },
        GradCase {
            name: "sigmoid",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -4.0, 4.0))], Box::new(|x| x[0].sigmoid()))
            },
        },
        GradCase {
            name: "sum",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -1.0, 1.0))], Box::new(|x| x[0].sum()))
            },
        },
        GradCase {
            name: "mean",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -1.0, 1.0))], Box::new(|x| x[0].mean()))
            },
        },
        GradCase {
            name: "mean_spatial",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -1.0, 1.0))], Box::new(|x| x[0].mean_spatial().unwrap()))
            },
        },
        GradCase {
            name: "reshape",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -1.0, 1.0))], Box::new(move |x| x[0].reshape(&[n]).unwrap()))
            },
        },
        GradCase {
            name: "concat_channels",
            draw: |r| {
                let a = small_4d(r);
                let mut b = a.clone();
                b[1] = r.gen_range(1..=3);
                let (na, nb) = (n_of(&a), n_of(&b));
                (
                    vec![(a, uniform(r, na, -1.0, 1.0)), (b, uniform(r, nb, -1.0, 1.0))],
                    Box::new(|x| x[0].concat_channels(&x[1]).unwrap()),
                )
            },
        },
        GradCase {
            name: "binary_cross_entropy",
            draw: |r| {
                let n = r.gen_range(4..=24);
                let bits: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
                let t = Tensor::new(&[n], bits).unwrap();
                (
                    vec![(vec![n], uniform(r, n, 0.02, 0.98))],
                    Box::new(move |x| x[0].binary_cross_entropy(&t).unwrap()),
                )
            },
        },
        GradCase {
            name: "conv2d",
            draw: |r| {
                let s = small_4d(r);
                let k = if r.gen_bool(0.5) { 3 } else { 1 };
                let co = r.gen_range(1..=3);
                let ks = vec![co, s[1], k, k];
                let (nx, nk) = (n_of(&s), n_of(&ks));
                (
                    vec![
                        (s, uniform(r, nx, -1.0, 1.0)),
                        (ks, uniform(r, nk, -1.0, 1.0)),
                        (vec![co], uniform(r, co, -1.0, 1.0)),
                    ],
                    Box::new(|x| x[0].conv2d(&x[1], Some(&x[2])).unwrap()),
                )
            },
        },
        GradCase {
            name: "separable_filter_valid",
            draw: |r| {
                let s = small_4d(r);
                let k = r.gen_range(1..=3);
                let taps = uniform(r, k, 0.1, 1.0);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -1.0, 1.0))], Box::new(move |x| x[0].separable_filter_valid(&taps).unwrap()))
            },
        },
        GradCase {
            name: "avg_pool2",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (vec![(s, uniform(r, n, -1.0, 1.0))], Box::new(|x| x[0].avg_pool2().unwrap()))
            },
        },
        GradCase {
            name: "batch_norm",
            draw: |r| {
                let mut s = small_4d(r);
                s[0] = 2;
                let c = s[1];
                let n = n_of(&s);
                (
                    vec![
                        (s, uniform(r, n, -1.0, 1.0)),
                        (vec![c], uniform(r, c, 0.5, 1.5)),
                        (vec![c], uniform(r, c, -0.5, 0.5)),
                    ],
                    Box::new(move |x| {
                        let mut stats = RunningStats::<f64>::new(c);
                        x[0].batch_norm(&x[1], &x[2], &mut stats, true).unwrap()
                    }),
                )
            },
        },
        GradCase {
            name: "ssim",
            draw: |r| {
                let s = vec![1, r.gen_range(1..=2), r.gen_range(11..=13), r.gen_range(11..=13)];
                let n = n_of(&s);
                (
                    pair(s, uniform(r, n, 0.0, 1.0), uniform(r, n, 0.0, 1.0)),
                    Box::new(|x| ssim_tensor(&x[0], &x[1]).unwrap()),
                )
            },
        },
        GradCase {
            name: "ms_ssim",
            draw: |r| {
                let s = vec![1, 1, r.gen_range(16..=18), r.gen_range(16..=18)];
                let n = n_of(&s);
                let x = uniform(r, n, 0.0, 1.0);
                let y = x.iter().map(|v| (v + r.gen_range(-0.2..0.2)).clamp(0.0, 1.0)).collect();
                (pair(s, x, y), Box::new(|x| ms_ssim_tensor(&x[0], &x[1], Scales::Auto).unwrap()))
            },
        },
        GradCase {
            name: "rmse",
            draw: |r| {
                let s = small_4d(r);
                let n = n_of(&s);
                (
                    pair(s, uniform(r, n, 0.0, 1.0), uniform(r, n, 0.0, 1.0)),
                    Box::new(|x| rmse_tensor(&x[0], &x[1]).unwrap()),
                )
            },
        },
        GradCase {
            name: "composite_loss",
            draw: |r| {
                let s = vec![1, 3, 16, 16];
                let n = n_of(&s);
                let cover = Tensor::new(&s, uniform(r, n, 0.0, 1.0)).unwrap();
                let stego: Vec<f64> = cover.data().iter().map(|v| (v + r.gen_range(-0.1..0.1)).clamp(0.0, 1.0)).collect();
                let m = 16 * 16;
                let bits: Vec<f64> = (0..m).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
                let bits = Tensor::new(&[1, 1, 16, 16], bits).unwrap();
                (
                    vec![(s, stego), (vec![1, 1, 16, 16], uniform(r, m, 0.05, 0.95))],
                    Box::new(move |x| {
                        composite_loss(&cover, &x[0], &bits, &x[1], &LossWeights::default())
                            .unwrap()
                            .total
                    }),
                )
            },
        },
    ]
}
