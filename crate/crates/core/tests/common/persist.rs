//! Persistence checks shared by the persistence tests and the acceptance run.
//! Each returns a description of the first failure.

use std::fs;
use std::path::{Path, PathBuf};

use stcl::cli::run_from;
use stcl::data::{gen_payload, synth_corpus, Checkpoint, CHECKPOINT_VERSION};
use stcl::error::CheckpointError;
use stcl::model::{ModelConfig, StegoNet};
use stcl::Error;

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn tiny_model(seed: u64) -> ModelConfig {
    ModelConfig {
        image_size: (16, 16),
        encoder_layers: 2,
        decoder_layers: 2,
        hidden_channels: 4,
        seed,
        ..ModelConfig::default()
    }
}

/// save → load → save gives the same bytes, and the reloaded model embeds
/// bit-identically.
pub fn checkpoint_round_trip(dir: &Path) -> Check {
    let cfg = tiny_model(5);
    let net = StegoNet::<f32>::new(&cfg).map_err(|e| e.to_string())?;
    let a = dir.join("a.ckpt");
    let b = dir.join("b.ckpt");
    net.to_checkpoint().save(&a).map_err(|e| e.to_string())?;
    let loaded = StegoNet::from_checkpoint(&Checkpoint::load(&a).map_err(|e| e.to_string())?, &cfg)
        .map_err(|e| e.to_string())?;
    loaded.to_checkpoint().save(&b).map_err(|e| e.to_string())?;
    let (ba, bb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    ensure(ba == bb, || "re-saved checkpoint differs from the original".into())?;

    let corpus = synth_corpus(10, (16, 16), 1).map_err(|e| e.to_string())?;
    let payload = gen_payload(9, 1, 16, 16);
    for s in &corpus.samples {
        let x = net.encode(&s.image, &payload).map_err(|e| e.to_string())?;
        let y = loaded.encode(&s.image, &payload).map_err(|e| e.to_string())?;
        let same = x.data.iter().zip(&y.data).all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same, || format!("reloaded model embeds {} differently", s.id))?;
    }
    Ok(())
}

fn expect_kind(path: &Path, want: fn(&CheckpointError) -> bool, what: &str) -> Check {
    match Checkpoint::load(path) {
        Err(e @ Error::Checkpoint { .. }) => {
            let Error::Checkpoint { source, path: p } = &e else { unreachable!() };
            ensure(want(source), || format!("{what}: got {source}"))?;
            ensure(p == path, || format!("{what}: error names {} not the file", p.display()))?;
            ensure(e.exit_code() == 3, || format!("{what}: exit code {}", e.exit_code()))
        }
        Err(e) => Err(format!("{what}: unexpected error {e}")),
        Ok(_) => Err(format!("{what}: corrupt file was accepted")),
    }
}

/// Bad magic, unsupported version, checksum mismatch, truncation and a
/// well-checksummed but malformed body each give their own error.
pub fn corrupt_files_rejected(dir: &Path) -> Check {
    let net = StegoNet::<f32>::new(&tiny_model(6)).map_err(|e| e.to_string())?;
    let good = net.to_checkpoint().to_bytes();
    let write = |name: &str, bytes: &[u8]| -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    };
    let reseal = |mut body: Vec<u8>| {
        body.truncate(body.len() - 4);
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    };

    let mut bad = good.clone();
    bad[..4].copy_from_slice(b"NOPE");
    expect_kind(&write("magic.ckpt", &bad), |e| matches!(e, CheckpointError::BadMagic { .. }), "bad magic")?;

    let mut bad = good.clone();
    bad[4..6].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    let bad = reseal(bad);
    expect_kind(
        &write("version.ckpt", &bad),
        |e| matches!(e, CheckpointError::UnsupportedVersion { .. }),
        "future version",
    )?;

    let mut bad = good.clone();
    let mid = bad.len() / 2;
    bad[mid] ^= 0x01;
    expect_kind(
        &write("flip.ckpt", &bad),
        |e| matches!(e, CheckpointError::ChecksumMismatch { .. }),
        "flipped bit",
    )?;

    expect_kind(
        &write("trunc.ckpt", &good[..good.len() / 3]),
        |e| matches!(e, CheckpointError::ChecksumMismatch { .. }),
        "truncated",
    )?;

    // claim one more tensor than is stored, with a valid checksum
    let echo_len = u32::from_le_bytes(good[6..10].try_into().unwrap()) as usize;
    let at = 10 + echo_len;
    let mut bad = good.clone();
    let count = u32::from_le_bytes(bad[at..at + 4].try_into().unwrap()) + 1;
    bad[at..at + 4].copy_from_slice(&count.to_le_bytes());
    expect_kind(
        &write("malformed.ckpt", &reseal(bad)),
        |e| matches!(e, CheckpointError::Malformed(_)),
        "malformed body",
    )?;

    expect_kind(&write("empty.ckpt", &[]), |e| !matches!(e, CheckpointError::ConfigMismatch(_)), "empty file")?;

    let missing = dir.join("missing.ckpt");
    match Checkpoint::load(&missing) {
        Err(e) => ensure(e.to_string().contains("missing.ckpt"), || format!("missing file: {e}")),
        Ok(_) => Err("missing file loaded".into()),
    }
}

/// Config for a pipeline small enough to run twice in a few seconds.
pub const TINY_CONFIG: &str = r#"{
  "synthetic_images": 24,
  "image_height": 16,
  "image_width": 16,
  "encoder_layers": 2,
  "decoder_layers": 2,
  "hidden_channels": 4,
  "teacher_budgets": [1, 2],
  "convergence_budget": 3,
  "alpha1": 0.05,
  "alpha2": 0.0,
  "mu1": 5.0,
  "mu2": 0.0,
  "max_iter": 6,
  "stage_caps": [2, 2, 2],
  "knee_min_epochs": 0,
  "knee_window": 1,
  "detector_epochs": 2
}"#;

fn cli(args: &[&str]) -> Check {
    let mut full = vec!["stcl"];
    full.extend_from_slice(args);
    run_from(full).map(|_| ()).map_err(|e| format!("stcl {}: {e}", args.join(" ")))
}

/// Runs every command of the tool into `out` with the tiny config.
pub fn run_pipeline(out: &Path) -> Check {
    fs::create_dir_all(out).unwrap();
    let config = out.join("config.json");
    fs::write(&config, TINY_CONFIG).unwrap();
    let c = config.to_str().unwrap();
    let p = |name: &str| out.join(name).to_str().unwrap().to_string();
    cli(&["train-teachers", "--config", c, "--out", &p("teachers")])?;
    cli(&["partition", "--config", c, "--teachers", &p("teachers"), "--out", &p("manifest.csv")])?;
    cli(&["train", "--config", c, "--mode", "stcl", "--manifest", &p("manifest.csv"), "--out", &p("stcl")])?;
    cli(&["train", "--config", c, "--mode", "baseline", "--out", &p("baseline")])?;
    cli(&[
        "evaluate", "--config", c, "--checkpoint", &p("stcl/final.ckpt"), "--manifest", &p("manifest.csv"),
        "--out", &p("eval.csv"),
    ])?;
    cli(&[
        "steganalyze", "--config", c, "--stego-model", &p("stcl/final.ckpt"), "--stego-model",
        &p("baseline/final.ckpt"), "--train-model", &p("baseline/final.ckpt"), "--out", &p("steg"),
    ])?;
    cli(&["detect-knee", "--log", &p("stcl/log.csv"), "--out", &p("knee.csv")])
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Runs the pipeline twice into fresh directories and compares every file
/// except the run descriptors, which record the output path.
pub fn outputs_byte_stable(dir: &Path) -> Check {
    let (a, b) = (dir.join("run_a"), dir.join("run_b"));
    run_pipeline(&a)?;
    run_pipeline(&b)?;
    let (fa, fb) = (files(&a), files(&b));
    ensure(fa == fb, || format!("file sets differ: {fa:?} vs {fb:?}"))?;
    let csvs = fa.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
    ensure(csvs >= 10, || format!("only {csvs} CSV files produced"))?;
    for f in &fa {
        if f.file_name().is_some_and(|n| n == "run.json") {
            continue;
        }
        let same = fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap();
        ensure(same, || format!("{} differs between reruns", f.display()))?;
    }
    Ok(())
}
