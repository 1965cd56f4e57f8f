use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// macro-F1(a) − macro-F1(b) on the original sessions.
    pub delta: f64,
    /// One-sided `(#{resampled delta ≤ 0} + 1) / (n + 1)`.
    pub p_value: f64,
    pub n: usize,
    pub seed: u64,
}

/// Paired bootstrap over sessions: both systems are scored on the same
/// resampled sessions each round.
pub fn paired_bootstrap(
    preds_a: &[u8],
    preds_b: &[u8],
    labels: &[u8],
    n: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let len = labels.len();
    if preds_a.len() != len || preds_b.len() != len || len == 0 {
        return Err(Error::Contract(format!(
            "paired_bootstrap needs aligned non-empty inputs, got {}, {} and {}",
            preds_a.len(),
            preds_b.len(),
            len
        )));
    }
    if n == 0 {
        return Err(Error::Config("bootstrap_n must be positive".into()));
    }
    let delta = Confusion::from_pairs(preds_a, labels).macro_f1()
        - Confusion::from_pairs(preds_b, labels).macro_f1();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut not_better = 0usize;
    for _ in 0..n {
        let mut ca = Confusion::default();
        let mut cb = Confusion::default();
        for _ in 0..len {
            let i = rng.random_range(0..len as u64) as usize;
            tally(&mut ca, preds_a[i], labels[i]);
            tally(&mut cb, preds_b[i], labels[i]);
        }
        if ca.macro_f1() - cb.macro_f1() <= 0.0 {
            not_better += 1;
        }
    }
    Ok(BootstrapResult {
        delta,
        p_value: (not_better + 1) as f64 / (n + 1) as f64,
        n,
        seed,
    })
}

fn tally(c: &mut Confusion, p: u8, y: u8) {
    match (p == 1, y == 1) {
        (false, false) => c.tn += 1,
        (true, false) => c.fp += 1,
        (false, true) => c.fn_ += 1,
        (true, true) => c.tp += 1,
    }
}
