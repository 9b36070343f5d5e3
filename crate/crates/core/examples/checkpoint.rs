//! Saves a model, reloads it, and shows how damaged files are reported.

use stcl::data::Checkpoint;
use stcl::model::{ModelConfig, StegoNet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("stcl_checkpoint_example");
    std::fs::create_dir_all(&dir)?;
    let cfg = ModelConfig {
        image_size: (16, 16),
        hidden_channels: 8,
        ..ModelConfig::default()
    };
    let net = StegoNet::<f32>::new(&cfg)?;
    let path = dir.join("model.ckpt");
    net.to_checkpoint().save(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("saved {} bytes, fingerprint {}", bytes.len(), net.fingerprint());

    let ck = Checkpoint::load(&path)?;
    let back = StegoNet::<f32>::from_checkpoint(&ck, &ModelConfig::from_echo(&ck.config_echo, cfg.seed)?)?;
    println!("reloaded fingerprint {}", back.fingerprint());

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0xFF;
    for (name, data) in [("flipped", flipped), ("truncated", bytes[..100].to_vec()), ("foreign", b"hello".to_vec())] {
        let p = dir.join(format!("{name}.ckpt"));
        std::fs::write(&p, data)?;
        match Checkpoint::load(&p) {
            Ok(_) => println!("{name}: loaded?!"),
            Err(e) => println!("{name}: exit {} {e}", e.exit_code()),
        }
    }
    Ok(())
}
