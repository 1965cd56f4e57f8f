use crate::data::NUM_CODES;
use crate::error::{Error, Result};
use crate::numerics::weighted_bce;

/// Mean class-weighted binary cross-entropy over a batch.
pub fn weighted_bce_batch(p_hat: &[f64], y: &[u8], w0: f64, w1: f64) -> Result<f64> {
    if p_hat.len() != y.len() || p_hat.is_empty() {
        return Err(Error::Contract(format!(
            "weighted_bce_batch needs equal non-empty inputs, got {} and {}",
            p_hat.len(),
            y.len()
        )));
    }
    let total: f64 = p_hat
        .iter()
        .zip(y)
        .map(|(&p, &yy)| {
            let w = if yy == 1 { w1 } else { w0 };
            weighted_bce(p, f64::from(yy), w)
        })
        .sum();
    Ok(total / p_hat.len() as f64)
}

/// Per-code mean squared errors and their sum.
///
/// `L_i` averages `(pred_i − target_i)²` over the batch in batch order and
/// `L` adds the `L_i` in code order.
pub fn multi_task_loss(
    preds: &[[f64; NUM_CODES]],
    targets: &[[f64; NUM_CODES]],
) -> Result<(f64, [f64; NUM_CODES])> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Contract(format!(
            "multi_task_loss needs equal non-empty batches, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mut per_code = [0.0; NUM_CODES];
    for (i, l) in per_code.iter_mut().enumerate() {
        let sq: f64 = preds
            .iter()
            .zip(targets)
            .map(|(p, t)| (p[i] - t[i]) * (p[i] - t[i]))
            .sum();
        *l = sq / n;
    }
    Ok((per_code.iter().sum(), per_code))
}
