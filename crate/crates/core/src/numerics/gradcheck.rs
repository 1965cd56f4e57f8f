use super::{ParamSet, Tape, Var};
use crate::error::Result;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − numeric| / max(1e-8, |analytic| + |numeric|)
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Compares tape gradients of `f` against central differences on every
/// parameter coordinate.
///
/// `f` records a forward pass on the supplied tape and returns the scalar
/// loss. The numeric side only reads forward values, never gradients.
pub fn finite_diff_check<F>(params: &ParamSet, f: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(params, &mut tape)?;
    let analytic = tape.backward(loss)?;

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(p, &mut tape)?;
        Ok(tape.value(loss).values()[0])
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        coordinates: 0,
    };
    let ids: Vec<_> = (0..params.len()).map(super::ParamId).collect();
    for id in ids {
        for i in 0..params.get(id).value.len() {
            let original = params.get(id).value.values()[i];
            probe.get_mut(id).value.values_mut()[i] = original + eps;
            let plus = eval(&probe)?;
            probe.get_mut(id).value.values_mut()[i] = original - eps;
            let minus = eval(&probe)?;
            probe.get_mut(id).value.values_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic.get(id).map_or(0.0, |g| g.values()[i]);
            let rel = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = Some(params.get(id).name.clone());
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
