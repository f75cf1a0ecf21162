//! Named random substreams derived from one master seed.
//!
//! Each `(label, index)` pair selects its own ChaCha stream, so draws for one
//! robot never shift when another robot is added.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn substream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(label, index));
    rng
}

fn stream_id(label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then fold in the index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
