use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Mode, Model};

pub const SALIENCY_BINS: usize = 100;

/// Mean attention density over normalized session time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyCurve {
    /// Code abbreviation, `mean` or `total`.
    pub code: String,
    pub bins: Vec<f64>,
    pub n_sessions: usize,
}

/// Resamples attention weights onto `bins` equal time bins.
///
/// Position `t` of `T` sits at normalized time `(t + 0.5) / T` and carries
/// density `α_t · T`. Between positions the density is linearly interpolated
/// and it is held constant before the first and after the last one. Each bin
/// takes the mean of that curve over its interval, so the bins carry exactly
/// the mass of `α` whatever the session length.
pub fn resample_curve(alpha: &[f64], bins: usize) -> Vec<f64> {
    let t_len = alpha.len();
    if t_len == 0 || bins == 0 {
        return vec![0.0; bins];
    }
    let scale = t_len as f64;
    let y: Vec<f64> = alpha.iter().map(|a| a * scale).collect();
    let knot = |t: usize| (t as f64 + 0.5) / scale;
    // area under the curve from 0 to each knot
    let mut area = Vec::with_capacity(t_len);
    area.push(y[0] * knot(0));
    for t in 1..t_len {
        area.push(area[t - 1] + (y[t - 1] + y[t]) / 2.0 / scale);
    }
    let cumulative = |x: f64| -> f64 {
        if x <= knot(0) {
            return y[0] * x;
        }
        let last = t_len - 1;
        if x >= knot(last) {
            return area[last] + y[last] * (x - knot(last));
        }
        let lo = ((x * scale - 0.5).floor() as usize).min(last - 1);
        let w = (x - knot(lo)) * scale;
        let y_x = y[lo] * (1.0 - w) + y[lo + 1] * w;
        area[lo] + (x - knot(lo)) * (y[lo] + y_x) / 2.0
    };
    let width = 1.0 / bins as f64;
    (0..bins)
        .map(|b| (cumulative((b + 1) as f64 * width) - cumulative(b as f64 * width)) / width)
        .collect()
}

/// Averages per-session curves for each head, given per-session attention
/// vectors (`alphas[session][head]`).
pub fn aggregate_alphas(mode: Mode, alphas: &[Vec<Vec<f64>>]) -> Result<Vec<SaliencyCurve>> {
    let names = mode.head_names();
    let n = alphas.len();
    if n == 0 {
        return Err(Error::Contract("saliency needs at least one session".into()));
    }
    let mut sums = vec![vec![0.0; SALIENCY_BINS]; names.len()];
    for session in alphas {
        if session.len() != names.len() {
            return Err(Error::Contract(format!(
                "expected {} attention heads, got {}",
                names.len(),
                session.len()
            )));
        }
        for (sum, alpha) in sums.iter_mut().zip(session) {
            for (s, v) in sum.iter_mut().zip(resample_curve(alpha, SALIENCY_BINS)) {
                *s += v;
            }
        }
    }
    let mut curves: Vec<SaliencyCurve> = names
        .into_iter()
        .zip(sums)
        .map(|(code, sum)| SaliencyCurve {
            code,
            bins: sum.into_iter().map(|s| s / n as f64).collect(),
            n_sessions: n,
        })
        .collect();
    if mode == Mode::MultiTask {
        let k = curves.len() as f64;
        let bins = (0..SALIENCY_BINS)
            .map(|b| curves.iter().map(|c| c.bins[b]).sum::<f64>() / k)
            .collect();
        curves.push(SaliencyCurve {
            code: "mean".into(),
            bins,
            n_sessions: n,
        });
    }
    Ok(curves)
}

/// Runs `model` over every session of `dataset` and aggregates its attention.
pub fn aggregate_saliency(model: &Model, dataset: &Dataset) -> Result<Vec<SaliencyCurve>> {
    let mut alphas = Vec::with_capacity(dataset.len());
    for ex in &dataset.examples {
        let pred = model.forward(&ex.x, &vec![true; ex.len()], &ex.meta)?;
        alphas.push(pred.trace.alphas);
    }
    aggregate_alphas(model.mode(), &alphas)
}

/// CSV with header `code,bin_0,…,bin_99` and one row per curve.
pub fn write_saliency_csv<W: Write>(mut w: W, curves: &[SaliencyCurve]) -> Result<()> {
    let header: Vec<String> = (0..SALIENCY_BINS).map(|b| format!("bin_{b}")).collect();
    writeln!(w, "code,{}", header.join(","))?;
    for c in curves {
        let values: Vec<String> = c.bins.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", c.code, values.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_and_single_position() {
        assert!(resample_curve(&[0.01; 100], 100).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(resample_curve(&[1.0], 100).iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn two_positions_decrease() {
        let c = resample_curve(&[1.0, 0.0], 100);
        assert!(c[0] > 1.0 && c[99] < 1.0);
        assert!(c.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!((c[0] - 2.0).abs() < 1e-12);
        // bin 50 spans [0.50, 0.51]; the density there is 2 − 4·(x − 0.25)
        assert!((c[50] - (2.0 - 4.0 * 0.255)).abs() < 1e-12);
    }

    #[test]
    fn one_session_and_duplicates() {
        let a = vec![0.1, 0.2, 0.3, 0.4];
        let one = aggregate_alphas(Mode::SingleTask, &[vec![a.clone()]]).unwrap();
        assert_eq!(one[0].code, "total");
        assert_eq!(one[0].bins, resample_curve(&a, 100));
        let two = aggregate_alphas(Mode::SingleTask, &[vec![a.clone()], vec![a.clone()]]).unwrap();
        for (x, y) in one[0].bins.iter().zip(&two[0].bins) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn multi_task_adds_mean_row() {
        let session: Vec<Vec<f64>> = (0..11).map(|_| vec![0.5, 0.5]).collect();
        let curves = aggregate_alphas(Mode::MultiTask, &[session]).unwrap();
        assert_eq!(curves.len(), 12);
        assert_eq!(curves[0].code, "ag");
        assert_eq!(curves[11].code, "mean");
        let mut csv = Vec::new();
        write_saliency_csv(&mut csv, &curves).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert!(lines[0].starts_with("code,bin_0,bin_1,"));
        assert!(lines[0].ends_with(",bin_99"));
        assert_eq!(lines[12].split(',').count(), 101);
    }

    fn arb_alpha() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..400).prop_filter_map("positive mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn mass_is_conserved(alpha in arb_alpha()) {
            let c = resample_curve(&alpha, 100);
            let mass: f64 = c.iter().sum::<f64>() / 100.0;
            prop_assert!(c.iter().all(|&v| v >= 0.0));
            prop_assert!((mass - 1.0).abs() <= 1e-9, "mass {}", mass);
        }
    }
}
