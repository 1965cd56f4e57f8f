use serde::{Deserialize, Serialize};

use super::tfidf::SparseVec;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 32;

/// Selected feature indices, best first, with their F statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub indices: Vec<usize>,
    /// `+∞` is written as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub f_stats: Vec<f64>,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

impl FeatureSelection {
    /// Projects a sparse row onto the selected features, densely.
    pub fn project(&self, row: &SparseVec) -> Vec<f64> {
        let mut out = vec![0.0; self.indices.len()];
        for (slot, &j) in self.indices.iter().enumerate() {
            if let Ok(pos) = row.binary_search_by_key(&j, |&(i, _)| i) {
                out[slot] = row[pos].1;
            }
        }
        out
    }
}

/// One-way ANOVA F statistic of every feature against binary labels.
///
/// A feature with no within-class spread scores `+∞` when its class means
/// differ and 0 otherwise.
pub fn f_statistics(x: &[SparseVec], y: &[u8], n_features: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let n = [y.iter().filter(|&&v| v == 0).count(), y.iter().filter(|&&v| v == 1).count()];
    if n[0] == 0 || n[1] == 0 {
        return Err(Error::DegenerateLabels(format!(
            "F-test needs both classes ({} negatives, {} positives)",
            n[0], n[1]
        )));
    }
    let mut sum = vec![[0.0f64; 2]; n_features];
    let mut nnz = vec![[0usize; 2]; n_features];
    for (row, &label) in x.iter().zip(y) {
        let c = usize::from(label);
        for &(j, v) in row {
            if j >= n_features {
                return Err(Error::Contract(format!("feature {j} beyond {n_features}")));
            }
            sum[j][c] += v;
            nnz[j][c] += 1;
        }
    }
    let mean: Vec<[f64; 2]> = sum
        .iter()
        .map(|s| [s[0] / n[0] as f64, s[1] / n[1] as f64])
        .collect();
    let mut ssw = vec![0.0f64; n_features];
    let mut scale = vec![0.0f64; n_features];
    for (row, &label) in x.iter().zip(y) {
        let c = usize::from(label);
        for &(j, v) in row {
            ssw[j] += (v - mean[j][c]).powi(2);
            scale[j] += v * v;
        }
    }
    let total = (n[0] + n[1]) as f64;
    let df_within = total - 2.0;
    Ok((0..n_features)
        .map(|j| {
            let m = mean[j];
            // implicit zeros of each class
            let w = ssw[j]
                + (n[0] - nnz[j][0]) as f64 * m[0] * m[0]
                + (n[1] - nnz[j][1]) as f64 * m[1] * m[1];
            let grand = (sum[j][0] + sum[j][1]) / total;
            let b = n[0] as f64 * (m[0] - grand).powi(2) + n[1] as f64 * (m[1] - grand).powi(2);
            if scale[j] == 0.0 {
                return 0.0;
            }
            let tol = 1e-12 * scale[j];
            if b <= tol {
                0.0
            } else if w <= tol || df_within <= 0.0 {
                f64::INFINITY
            } else {
                b / (w / df_within)
            }
        })
        .collect())
}

/// Top `min(k, n_features)` features by F, ties broken by lower index.
pub fn f_test_select(x: &[SparseVec], y: &[u8], n_features: usize, k: usize) -> Result<FeatureSelection> {
    let f = f_statistics(x, y, n_features)?;
    let mut order: Vec<usize> = (0..n_features).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    order.truncate(k.min(n_features));
    Ok(FeatureSelection {
        f_stats: order.iter().map(|&j| f[j]).collect(),
        indices: order,
    })
}
