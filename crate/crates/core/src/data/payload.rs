use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Secret bits for one image: `depth` bit-planes of `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    /// `{0.0, 1.0}` values in `[D, H, W]` order.
    pub bits: Vec<f32>,
    pub seed: u64,
}

impl Payload {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1.0).count()
    }
}

/// Fair i.i.d. bits from a ChaCha20 keystream keyed by `seed`.
pub fn gen_payload(seed: u64, depth: usize, height: usize, width: usize) -> Payload {
    let n = depth * height * width;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut bits = Vec::with_capacity(n);
    while bits.len() < n {
        let word = rng.next_u64();
        let take = (n - bits.len()).min(64);
        bits.extend((0..take).map(|k| ((word >> k) & 1) as f32));
    }
    Payload {
        depth,
        height,
        width,
        bits,
        seed,
    }
}
