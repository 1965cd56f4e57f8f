use serde::{Deserialize, Serialize};

use crate::data::class_weights;
use crate::error::{Error, Result};
use crate::evaluation::folds::shuffle;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub params: SvmParams,
}

impl LinearSvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// Label 1 iff the decision value is nonnegative.
    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) >= 0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `(1/2)‖w‖² + C·Σ c_i·max(0, 1 − y_i(wᵀx_i + b))` with balanced class
/// weights `c_i`. The bias enters the norm like any other weight.
pub fn svm_objective(model: &LinearSvmModel, x: &[Vec<f64>], y: &[u8]) -> Result<f64> {
    let (w0, w1) = class_weights(y)?;
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let c = if yi == 1 { w1 } else { w0 };
            c * (1.0 - sign(yi) * model.decision(xi)).max(0.0)
        })
        .sum();
    let norm2 = dot(&model.w, &model.w) + model.b * model.b;
    Ok(0.5 * norm2 + model.params.c * hinge)
}

/// Linear SVM by stochastic subgradient descent on the objective above,
/// scaled by `λ = 1/(C·n)`: step `1/(λt)`, projection onto the ball that
/// must contain the optimum, and a running average of all iterates, which is
/// returned. Rows are visited in a seeded random order each epoch.
pub fn svm_train(x: &[Vec<f64>], y: &[u8], params: SvmParams) -> Result<LinearSvmModel> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if !(params.c > 0.0 && params.c.is_finite()) || params.epochs == 0 {
        return Err(Error::Config("SVM needs C > 0 and at least one epoch".into()));
    }
    let (w0, w1) = class_weights(y)?;
    let n = x.len();
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("SVM rows differ in width".into()));
    }
    let lambda = 1.0 / (params.c * n as f64);
    let mean_weight = y.iter().map(|&l| if l == 1 { w1 } else { w0 }).sum::<f64>() / n as f64;
    let radius = (2.0 * mean_weight / lambda).sqrt();

    // the last coordinate is the bias
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut t = 0usize;
    for epoch in 0..params.epochs {
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(&mut perm, seeds::derive_indexed(params.seed, seeds::SHUFFLE, epoch as u64));
        for &i in &perm {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let yi = sign(y[i]);
            let margin = yi * (dot(&w[..d], &x[i]) + w[d]);
            let decay = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= decay);
            if margin < 1.0 {
                let step = eta * if y[i] == 1 { w1 } else { w0 } * yi;
                w[..d].iter_mut().zip(&x[i]).for_each(|(v, xv)| *v += step * xv);
                w[d] += step;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            let k = 1.0 / t as f64;
            avg.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) * k);
        }
    }
    let b = avg.pop().expect("bias slot");
    Ok(LinearSvmModel { w: avg, b, params })
}
