//! Seeded randomness split by component name.
//!
//! One root seed drives a whole run. Each consumer asks for a stream by name, so adding a
//! new consumer never perturbs the draws another component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A sub-tree for a named component; its streams are independent of the parent's.
    pub fn child(&self, name: &str) -> SeedTree {
        SeedTree {
            seed: splitmix64(self.seed ^ splitmix64(fnv1a(name.as_bytes()))),
        }
    }

    /// Same as [`SeedTree::child`] with an integer label, e.g. a trial index.
    pub fn child_indexed(&self, name: &str, index: u64) -> SeedTree {
        let c = self.child(name);
        SeedTree {
            seed: splitmix64(c.seed ^ splitmix64(index.wrapping_add(1))),
        }
    }

    pub fn stream(&self, name: &str) -> Rng {
        Rng::seed_from_u64(self.child(name).seed)
    }
}
