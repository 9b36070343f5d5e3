//! Reverse-mode gradients on a tiny conv layer, checked against central
//! differences, then Adam fitting a 1x1 convolution.

use stcl::tensor::{adam_step, AdamConfig, AdamState, Tensor};

fn loss(x: &Tensor<f64>, k: &Tensor<f64>) -> stcl::Result<Tensor<f64>> {
    Ok(x.conv2d(k, None)?.sigmoid().add_scalar(-0.5).square().mean())
}

fn main() -> stcl::Result<()> {
    let x = Tensor::new(&[1, 1, 4, 4], (0..16).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let k = Tensor::param(&[1, 1, 3, 3], vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2, 0.1, -0.3])?;
    loss(&x, &k)?.backward()?;
    let grad = k.grad().expect("kernel is a parameter");

    let h = 1e-6;
    for (i, g) in grad.iter().enumerate() {
        let at = |d: f64| -> stcl::Result<f64> {
            let mut v = k.data().to_vec();
            v[i] += d;
            loss(&x, &Tensor::new(&[1, 1, 3, 3], v)?)?.item()
        };
        let numeric = (at(h)? - at(-h)?) / (2.0 * h);
        println!("dL/dk[{i}] analytic {g:+.8} numeric {numeric:+.8}");
    }

    // learn w, b with w * a + b ~ 3a - 1
    let a: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
    let target: Vec<f64> = a.iter().map(|v| 3.0 * v - 1.0).collect();
    let a = Tensor::new(&[1, 1, 4, 8], a)?;
    let target = Tensor::new(&[1, 1, 4, 8], target)?;
    let (mut w, mut b) = (vec![0.0f64], vec![0.0f64]);
    let mut state = AdamState::new();
    let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
    for step in 0..=400 {
        let wt = Tensor::param(&[1, 1, 1, 1], w.clone())?;
        let bt = Tensor::param(&[1], b.clone())?;
        let l = a.conv2d(&wt, Some(&bt))?.sub(&target)?.square().mean();
        l.backward()?;
        let grads = [wt.grad().unwrap(), bt.grad().unwrap()];
        adam_step(&mut [&mut w[..], &mut b[..]], &grads, &mut state, &cfg)?;
        if step % 100 == 0 {
            println!("step {step:3}: loss {:.6}  w {:.4}  b {:.4}", l.item()?, w[0], b[0]);
        }
    }
    Ok(())
}
