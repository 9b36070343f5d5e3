//! Feeds a noisy decaying loss curve to the stage stop rule one epoch at a
//! time, as the trainer does, and reports where it fires.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcl::knee::{scan_knee, KneeParams};
use stcl::schedule::{should_stop_stage, Pool, StagePolicy, StopRule};

fn main() -> stcl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let curve: Vec<f64> = (0..60)
        .map(|i| 0.2 + 1.5 * (-(i as f64) / 6.0).exp() + rng.gen_range(-0.02..0.02))
        .collect();

    let params = KneeParams::default();
    let policy = StagePolicy {
        pool: Pool::Easy,
        stop_rule: StopRule::Knee(params),
        epoch_cap: 40,
    };
    for epoch in 1..=curve.len() {
        let d = should_stop_stage(&curve[..epoch], &policy)?;
        if d.stop {
            println!(
                "stage stops after epoch {epoch}: trigger {}, knee at index {:?}",
                d.report.triggered_by.unwrap(),
                d.report.knee_epoch
            );
            break;
        }
    }

    let full = scan_knee(&curve, &params)?;
    println!("offline scan of all {} epochs: knee {:?}", curve.len(), full.knee);
    let line: Vec<f64> = (0..60).map(|i| 1.0 - 0.01 * i as f64).collect();
    println!("straight line: knee {:?}", scan_knee(&line, &params)?.knee);
    Ok(())
}
