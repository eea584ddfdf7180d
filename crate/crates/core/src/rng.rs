//! Labelled, splittable random streams.
//!
//! Every stochastic operation takes a [`Stream`]. A stream is a 64-bit key
//! derived from the root seed and a path of labels/indices, so the numbers a
//! component draws depend only on where it sits in the label tree, never on
//! evaluation order or thread scheduling. The generator behind a stream is
//! ChaCha8, a counter-based cipher RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 output finalizer; a bijection on u64 with full avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit string hash: FNV-1a followed by the SplitMix64 finalizer.
pub fn stable_hash(s: &str) -> u64 {
    mix64(fnv1a64(s.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn root(seed: u64) -> Self {
        Stream { key: mix64(seed ^ 0x6a09_e667_f3bc_c908) }
    }

    pub fn child(&self, label: &str) -> Self {
        Stream {
            key: mix64(self.key.rotate_left(17) ^ fnv1a64(label.as_bytes())),
        }
    }

    pub fn index(&self, i: u64) -> Self {
        Stream {
            key: mix64(self.key.rotate_left(29) ^ mix64(i.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut k = self.key;
        for chunk in seed.chunks_mut(8) {
            k = mix64(k.wrapping_add(0x9e37_79b9_7f4a_7c15));
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
