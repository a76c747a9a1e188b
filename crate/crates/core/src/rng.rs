//! Seeded random streams.
//!
//! Every random draw in the crate flows through a [`SimRng`] supplied by the
//! caller. Independent tasks get their own substream via [`substream`], so
//! results do not depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit mix of a parent seed and a task label.
pub fn child_seed(parent: u64, task: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in task.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(parent ^ splitmix64(h))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Random stream for `task` derived from `parent`.
pub fn substream(parent: u64, task: &str) -> SimRng {
    seeded(child_seed(parent, task))
}

/// Substream indexed by an integer, e.g. a seed replicate or a tile id.
pub fn indexed_substream(parent: u64, task: &str, index: u64) -> SimRng {
    seeded(splitmix64(child_seed(parent, task) ^ splitmix64(index)))
}
