use super::{AttentionParams, GruCellParams, MlpParams, Mode, Model};
use crate::data::NUM_CODES;
use crate::error::{Error, Result};
use crate::numerics::{Activation, ParamId, Tape, Tensor, Var, PROB_CLIP};

/// A model whose parameters are recorded once on a tape, so several
/// sessions can share the bindings within one batch.
pub struct BoundModel<'m> {
    model: &'m Model,
    vars: Vec<Var>,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct TapeForward {
    pub h: Var,
    pub alphas: Vec<Var>,
    pub contexts: Vec<Var>,
    /// `1 × 1` probability (single-task) or `1 × 11` unclamped scores.
    pub output: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `T × 2u` hidden sequence, zero at padded rows.
    pub h: Tensor,
    pub alphas: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub outputs: Vec<f64>,
    pub trace: ForwardTrace,
}

struct Gates {
    z: Var,
    r: Var,
    h: Var,
}

impl<'m> BoundModel<'m> {
    pub fn bind(model: &'m Model, tape: &mut Tape) -> Self {
        let vars = (0..model.params.len())
            .map(|i| tape.param(&model.params, ParamId(i)))
            .collect();
        BoundModel { model, vars }
    }

    fn v(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn project(&self, tape: &mut Tape, cell: &GruCellParams, x: Var) -> Result<Gates> {
        let mut gate = |w: ParamId, b: ParamId| -> Result<Var> {
            let xw = tape.matmul(x, self.v(w))?;
            tape.add_row(xw, self.v(b))
        };
        Ok(Gates {
            z: gate(cell.w_z, cell.b_z)?,
            r: gate(cell.w_r, cell.b_r)?,
            h: gate(cell.w_h, cell.b_h)?,
        })
    }

    /// One GRU update from already projected input gates (`1 × u` each).
    fn step(&self, tape: &mut Tape, cell: &GruCellParams, g: &Gates, h: Var) -> Result<Var> {
        let hu_z = tape.matmul(h, self.v(cell.u_z))?;
        let z_in = tape.add(g.z, hu_z)?;
        let z = tape.activate(z_in, Activation::Sigmoid);
        let hu_r = tape.matmul(h, self.v(cell.u_r))?;
        let r_in = tape.add(g.r, hu_r)?;
        let r = tape.activate(r_in, Activation::Sigmoid);
        let rh = tape.mul(r, h)?;
        let rh_u = tape.matmul(rh, self.v(cell.u_h))?;
        let cand_in = tape.add(g.h, rh_u)?;
        let cand = tape.activate(cand_in, Activation::Tanh);
        let keep = tape.affine(z, -1.0, 1.0);
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        tape.add(old, new)
    }

    /// `h_t` from a `1 × d` input row and a `1 × u` previous state.
    pub fn gru_step(&self, tape: &mut Tape, cell: &GruCellParams, x: Var, h: Var) -> Result<Var> {
        let gates = self.project(tape, cell, x)?;
        self.step(tape, cell, &gates, h)
    }

    /// Bidirectional pass over the valid rows of `x` (`T × d`).
    pub fn bigru(&self, tape: &mut Tape, x: Var, mask: &[bool]) -> Result<Var> {
        let (t_len, _) = tape.value(x).dims2();
        if mask.len() != t_len {
            return Err(Error::Shape {
                op: "bigru mask",
                left: tape.value(x).shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let valid: Vec<usize> = (0..t_len).filter(|&t| mask[t]).collect();
        if valid.is_empty() {
            return Err(Error::Degenerate("bigru needs at least one valid position".into()));
        }
        let u = self.model.config.u;
        let mut states: [Vec<Option<Var>>; 2] = [vec![None; t_len], vec![None; t_len]];
        let cells = [self.model.gru_fwd, self.model.gru_bwd];
        for (dir, cell) in cells.iter().enumerate() {
            let all = self.project(tape, cell, x)?;
            let mut h = tape.constant(Tensor::zeros(&[1, u]));
            let order: Box<dyn Iterator<Item = &usize>> = if dir == 0 {
                Box::new(valid.iter())
            } else {
                Box::new(valid.iter().rev())
            };
            for &t in order {
                let gates = Gates {
                    z: tape.row(all.z, t)?,
                    r: tape.row(all.r, t)?,
                    h: tape.row(all.h, t)?,
                };
                h = self.step(tape, cell, &gates, h)?;
                states[dir][t] = Some(h);
            }
        }
        let mut rows = Vec::with_capacity(t_len);
        let mut pad = None;
        for t in 0..t_len {
            match (states[0][t], states[1][t]) {
                (Some(f), Some(b)) => rows.push(tape.concat_cols(f, b)?),
                _ => {
                    let z = *pad.get_or_insert_with(|| tape.constant(Tensor::zeros(&[1, 2 * u])));
                    rows.push(z);
                }
            }
        }
        tape.stack_rows(&rows)
    }

    /// Additive attention over `h` (`T × 2u`); returns (`1 × 2u` context, `T × 1` weights).
    pub fn attention(
        &self,
        tape: &mut Tape,
        head: &AttentionParams,
        h: Var,
        mask: &[bool],
    ) -> Result<(Var, Var)> {
        let t_len = tape.value(h).dims2().0;
        let hw = tape.matmul(h, self.v(head.w_a))?;
        let hwb = tape.add_row(hw, self.v(head.b_a))?;
        let act = tape.activate(hwb, Activation::Tanh);
        let scores = tape.matmul(act, self.v(head.v_a))?;
        let alpha = tape.masked_softmax(scores, mask)?;
        let alpha_row = tape.reshape(alpha, vec![1, t_len])?;
        let context = tape.matmul(alpha_row, h)?;
        Ok((context, alpha))
    }

    /// Hidden ReLU layer then a pre-activation output.
    pub fn mlp(&self, tape: &mut Tape, head: &MlpParams, input: Var) -> Result<Var> {
        let a = tape.matmul(input, self.v(head.w1))?;
        let a = tape.add_row(a, self.v(head.b1))?;
        let hidden = tape.activate(a, Activation::Relu);
        let o = tape.matmul(hidden, self.v(head.w2))?;
        tape.add_row(o, self.v(head.b2))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        mask: &[bool],
        meta: &[f64],
    ) -> Result<TapeForward> {
        let cfg = &self.model.config;
        let (_, d) = x.dims2();
        if d != cfg.d {
            return Err(Error::Shape {
                op: "model input",
                left: x.shape().to_vec(),
                right: vec![cfg.d],
            });
        }
        if meta.len() != cfg.m {
            return Err(Error::Shape {
                op: "metadata width",
                left: vec![meta.len()],
                right: vec![cfg.m],
            });
        }
        let xv = tape.constant(x.clone());
        let h = self.bigru(tape, xv, mask)?;
        let meta_var = (cfg.m > 0).then(|| tape.constant(Tensor::row(meta.to_vec())));

        let mut alphas = Vec::with_capacity(self.model.heads.len());
        let mut contexts = Vec::with_capacity(self.model.heads.len());
        let mut outs = Vec::with_capacity(self.model.heads.len());
        for (att, mlp) in self.model.attention.iter().zip(&self.model.heads) {
            let (context, alpha) = self.attention(tape, att, h, mask)?;
            let input = match meta_var {
                Some(m) => tape.concat_cols(context, m)?,
                None => context,
            };
            outs.push(self.mlp(tape, mlp, input)?);
            alphas.push(alpha);
            contexts.push(context);
        }
        let output = match cfg.mode {
            Mode::SingleTask => tape.activate(outs[0], Activation::Sigmoid),
            Mode::MultiTask => {
                let mut acc = outs[0];
                for &o in &outs[1..] {
                    acc = tape.concat_cols(acc, o)?;
                }
                acc
            }
        };
        Ok(TapeForward {
            h,
            alphas,
            contexts,
            output,
        })
    }
}

impl Model {
    pub fn forward(&self, x: &Tensor, mask: &[bool], meta: &[f64]) -> Result<Prediction> {
        let mut tape = Tape::new();
        let bound = BoundModel::bind(self, &mut tape);
        let f = bound.forward(&mut tape, x, mask, meta)?;
        let trace = ForwardTrace {
            h: tape.value(f.h).clone(),
            alphas: f.alphas.iter().map(|&a| tape.value(a).values().to_vec()).collect(),
            contexts: f.contexts.iter().map(|&c| tape.value(c).values().to_vec()).collect(),
        };
        Ok(Prediction {
            outputs: tape.value(f.output).values().to_vec(),
            trace,
        })
    }

    fn expect_mode(&self, mode: Mode) -> Result<()> {
        if self.config.mode != mode {
            return Err(Error::Mode {
                expected: mode.to_string(),
                found: self.config.mode.to_string(),
            });
        }
        Ok(())
    }

    /// Probability of competent delivery, kept strictly inside (0, 1).
    pub fn single_task_forward(
        &self,
        x: &Tensor,
        mask: &[bool],
        meta: &[f64],
    ) -> Result<(f64, ForwardTrace)> {
        self.expect_mode(Mode::SingleTask)?;
        let pred = self.forward(x, mask, meta)?;
        let p = pred.outputs[0].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        Ok((p, pred.trace))
    }

    /// Unclamped per-code scores in code order.
    pub fn multi_task_forward(
        &self,
        x: &Tensor,
        mask: &[bool],
        meta: &[f64],
    ) -> Result<([f64; NUM_CODES], ForwardTrace)> {
        self.expect_mode(Mode::MultiTask)?;
        let pred = self.forward(x, mask, meta)?;
        let scores: [f64; NUM_CODES] = pred
            .outputs
            .as_slice()
            .try_into()
            .expect("eleven head outputs");
        Ok((scores, pred.trace))
    }

    /// One GRU update of the forward (`backward == false`) or backward cell.
    pub fn gru_step(&self, backward: bool, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        let cell = if backward { self.gru_bwd } else { self.gru_fwd };
        let mut tape = Tape::new();
        let bound = BoundModel::bind(self, &mut tape);
        let xv = tape.constant(Tensor::row(x.to_vec()));
        let hv = tape.constant(Tensor::row(h_prev.to_vec()));
        let out = bound.gru_step(&mut tape, &cell, xv, hv)?;
        Ok(tape.value(out).values().to_vec())
    }

    pub fn bigru_forward(&self, x: &Tensor, mask: &[bool]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = BoundModel::bind(self, &mut tape);
        let xv = tape.constant(x.clone());
        let h = bound.bigru(&mut tape, xv, mask)?;
        Ok(tape.value(h).clone())
    }

    /// Context vector and attention weights of head `head` over `h`.
    pub fn attention(&self, head: usize, h: &Tensor, mask: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let att = self.attention.get(head).copied().ok_or_else(|| {
            Error::Contract(format!("head {head} out of range ({} heads)", self.attention.len()))
        })?;
        let mut tape = Tape::new();
        let bound = BoundModel::bind(self, &mut tape);
        let hv = tape.constant(h.clone());
        let (c, a) = bound.attention(&mut tape, &att, hv, mask)?;
        Ok((tape.value(c).values().to_vec(), tape.value(a).values().to_vec()))
    }
}
