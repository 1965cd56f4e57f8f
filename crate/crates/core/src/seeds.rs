//! Named sub-seeds derived from a single top-level seed.

use crate::data::embed::fnv1a64;

pub const FOLDS: &str = "folds";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const BOOTSTRAP: &str = "bootstrap";
pub const VALIDATION: &str = "validation";
pub const SVM: &str = "svm";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(0xcbf2_9ce4_8422_2325, name.as_bytes()))
}

pub fn derive_indexed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(derive(seed, name) ^ splitmix64(index))
}
