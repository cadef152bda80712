//! Seeded random streams.
//!
//! Work is cut into fixed-size chunks and every chunk draws from its own
//! stream keyed by `(master seed, path)`, so results do not depend on how
//! many threads execute the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Events per independently seeded chunk.
pub const CHUNK: u64 = 1 << 16;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `master` and a hierarchical index path.
pub fn substream(master: u64, path: &[u64]) -> StreamRng {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    let mut seed = [0u8; 32];
    let mut x = h;
    for chunk in seed.chunks_mut(8) {
        x = splitmix64(x);
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Splits `n` items into `(chunk index, chunk length)` pairs of size [`CHUNK`].
pub fn chunks(n: u64) -> Vec<(u64, u64)> {
    let full = n / CHUNK;
    let rem = n % CHUNK;
    let mut out: Vec<(u64, u64)> = (0..full).map(|i| (i, CHUNK)).collect();
    if rem > 0 {
        out.push((full, rem));
    }
    out
}
