use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{truncate_pad, Dataset, NUM_CODES};
use crate::numerics::Tensor;
use crate::seeds;

/// Indices of the examples in one batch, in batch order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

/// A batch with every session padded to a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub x: Vec<Tensor>,
    pub masks: Vec<Vec<bool>>,
    pub labels: Vec<u8>,
    pub codes: Vec<[f64; NUM_CODES]>,
    pub meta: Vec<Vec<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn padded(&self, dataset: &Dataset, max_len: usize) -> PaddedBatch {
        let mut out = PaddedBatch {
            x: Vec::with_capacity(self.len()),
            masks: Vec::with_capacity(self.len()),
            labels: Vec::with_capacity(self.len()),
            codes: Vec::with_capacity(self.len()),
            meta: Vec::with_capacity(self.len()),
        };
        for &i in &self.indices {
            let ex = &dataset.examples[i];
            let (x, mask) = truncate_pad(&ex.x, max_len);
            out.x.push(x);
            out.masks.push(mask);
            out.labels.push(ex.label);
            out.codes.push(ex.codes);
            out.meta.push(ex.meta.clone());
        }
        out
    }
}

/// Seeded permutation of `0..n`, fresh for every epoch.
///
/// Reverse Fisher–Yates: for `i = n−1 … 1`, swap `i` with `j` drawn from
/// `0..=i` as a `u32`, using ChaCha8 seeded from the `shuffle` sub-seed of
/// `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(seeds::derive_indexed(seed, seeds::SHUFFLE, epoch as u64));
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i as u32) as usize;
        order.swap(i, j);
    }
    order
}

/// Splits the epoch's shuffled order into batches; the last may be short.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Batch> {
    let size = batch_size.max(1);
    epoch_order(n, seed, epoch)
        .chunks(size)
        .map(|c| Batch { indices: c.to_vec() })
        .collect()
}
