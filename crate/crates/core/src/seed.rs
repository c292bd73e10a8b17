//! Seed derivation. All randomness in a run flows from one root seed; each
//! component gets its own stream seed from `(root, component name, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream seed for `component` number `index` under `root`: FNV-1a over the
/// component name, mixed with root and index through splitmix64.
pub fn derive_seed(root: u64, component: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in component.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(root ^ h).wrapping_add(index))
}

pub fn rng_for(root: u64, component: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(root, component, index))
}
