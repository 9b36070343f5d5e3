mod common;

use common::grad_cases::{cases, GradCase};
use common::{gradcheck, rng};

const DRAWS: u64 = 20;
const TOL: f64 = 1e-4;

fn check(name: &str) {
    let case: GradCase = cases().into_iter().find(|c| c.name == name).expect("known case");
    for k in 0..DRAWS {
        let mut r = rng(1000 * k + name.len() as u64);
        let (inputs, op) = (case.draw)(&mut r);
        let err = gradcheck(&inputs, op, k, 48);
        assert!(err < TOL, "{name} draw {k}: relative error {err:e}");
    }
}

macro_rules! gradchecks {
    ($($name:ident),* $(,)?) => {
        $(#[test] fn $name() { check(stringify!($name)); })*
    };
}

gradchecks!(
    add, sub, mul, div, scalar_affine, square, sqrt, powf, clamp, leaky_relu, sigmoid, sum, mean,
    mean_spatial, reshape, concat_channels, binary_cross_entropy, conv2d, separable_filter_valid,
    avg_pool2, batch_norm, ssim, ms_ssim, rmse, composite_loss,
);

#[test]
fn every_case_has_a_test() {
    assert_eq!(cases().len(), 25);
}
