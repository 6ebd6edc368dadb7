//! Seeded, hierarchically addressable random streams.
//!
//! A stream is identified by `(seed, path)`. The pair is folded through a
//! SplitMix64-style mixer into a ChaCha key, so a stream's output depends on
//! nothing but its address. Parallel work takes one substream per task and
//! the result is independent of scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    path: Vec<u64>,
    rng: ChaCha12Rng,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut state = mix64(seed ^ 0x5EED_0F_5EED_0F00);
    for (depth, &idx) in path.iter().enumerate() {
        // depth enters the mix so that [a, b] and [b, a] differ
        state = mix64(state ^ mix64(idx.wrapping_add((depth as u64 + 1) << 56)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = mix64(state.wrapping_add(i as u64));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, Vec::new())
    }

    pub fn at(seed: u64, path: Vec<u64>) -> Self {
        let rng = ChaCha12Rng::from_seed(derive_key(seed, &path));
        Self { seed, path, rng }
    }

    /// Child stream at `path ++ [index]`; does not advance `self`.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self::at(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
