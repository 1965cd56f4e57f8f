use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Glorot bound `sqrt(6 / (fan_in + fan_out))`. Vectors count as `n × 1`.
pub fn glorot_limit(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [] => (1, 1),
        [n] => (*n, 1),
        [r, c, ..] => (*r, *c),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform tensor, deterministic per seed.
pub fn glorot_init(shape: &[usize], seed: u64) -> Tensor {
    let limit = glorot_limit(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), values).expect("shape matches value count")
}
