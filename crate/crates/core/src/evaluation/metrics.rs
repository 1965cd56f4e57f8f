use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with class 1 as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl Confusion {
    pub fn from_pairs(preds: &[u8], labels: &[u8]) -> Confusion {
        let mut c = Confusion::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p == 1, y == 1) {
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (true, true) => c.tp += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    /// Macro-F1 straight from counts, with 0/0 taken as 0.
    pub fn macro_f1(&self) -> f64 {
        let f1_pos = f1(self.tp, self.fp, self.fn_);
        let f1_neg = f1(self.tn, self.fn_, self.fp);
        (f1_neg + f1_pos) / 2.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2·tp / (2·tp + fp + fn)`, which equals the harmonic mean of precision and recall.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    /// Class 0 then class 1.
    pub per_class: [ClassMetrics; 2],
    pub confusion: Confusion,
}

pub fn macro_f1(preds: &[u8], labels: &[u8]) -> Result<F1Report> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Contract(format!(
            "macro_f1 needs equal non-empty inputs, got {} and {}",
            preds.len(),
            labels.len()
        )));
    }
    let c = Confusion::from_pairs(preds, labels);
    let class = |tp: usize, fp: usize, fn_: usize| ClassMetrics {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: f1(tp, fp, fn_),
        support: tp + fn_,
    };
    let per_class = [class(c.tn, c.fn_, c.fp), class(c.tp, c.fp, c.fn_)];
    Ok(F1Report {
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        per_class,
        confusion: c,
    })
}
