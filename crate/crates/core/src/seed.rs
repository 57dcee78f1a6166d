//! Deterministic RNG streams: one named substream per consumer so that, for
//! example, changing the mask stream leaves the split stream untouched.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stable 64-bit derivation (FNV-1a over master bytes then the name).
    pub fn derive(&self, name: &str) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for b in self.master.to_le_bytes().iter().chain(name.as_bytes()) {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn rng(&self, name: &str) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.derive(name))
    }
}
