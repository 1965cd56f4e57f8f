//! BiGRU encoder with additive attention and MLP heads.
//!
//! Single-task mode has one attention head and one MLP ending in a sigmoid.
//! Multi-task mode shares the BiGRU across eleven code heads, each with its
//! own attention layer and a linear-output MLP.

mod forward;
mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Code, COMPETENCE_THRESHOLD, MAX_CODE_SCORE, NUM_CODES};
use crate::error::{Error, Result};
use crate::numerics::{glorot_init, ParamId, ParamSet, Tensor};
use crate::seeds;

pub use forward::{BoundModel, ForwardTrace, Prediction, TapeForward};
pub use io::{load_model, load_model_as, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleTask,
    MultiTask,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SingleTask => "single_task",
            Mode::MultiTask => "multi_task",
        }
    }

    pub fn num_heads(self) -> usize {
        match self {
            Mode::SingleTask => 1,
            Mode::MultiTask => NUM_CODES,
        }
    }

    /// Head names: `total` for single-task, code abbreviations otherwise.
    pub fn head_names(self) -> Vec<String> {
        match self {
            Mode::SingleTask => vec!["total".to_string()],
            Mode::MultiTask => Code::ALL.iter().map(|c| c.abbrev().to_string()).collect(),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "single_task" => Ok(Mode::SingleTask),
            "multi" | "multi_task" => Ok(Mode::MultiTask),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    /// Embedding dimension.
    pub d: usize,
    /// GRU hidden units per direction.
    pub u: usize,
    /// Attention hidden units.
    pub p: usize,
    /// MLP hidden units.
    pub q: usize,
    /// Metadata width, 0 when metadata is disabled.
    pub m: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.u == 0 || self.p == 0 || self.q == 0 || self.max_len == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive: d={}, u={}, p={}, q={}, max_len={}",
                self.d, self.u, self.p, self.q, self.max_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCellParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub w_a: ParamId,
    pub b_a: ParamId,
    /// Stored as a `p × 1` column.
    pub v_a: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Parameter values plus typed handles into them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub gru_fwd: GruCellParams,
    pub gru_bwd: GruCellParams,
    pub attention: Vec<AttentionParams>,
    pub heads: Vec<MlpParams>,
}

/// Weight matrices get Glorot-uniform values, biases start at zero.
struct Builder {
    params: ParamSet,
    seed: u64,
}

impl Builder {
    fn weight(&mut self, name: String, shape: &[usize]) -> Result<ParamId> {
        let seed = seeds::derive_indexed(self.seed, seeds::INIT, self.params.len() as u64);
        self.params.add(name, glorot_init(shape, seed))
    }

    fn bias(&mut self, name: String, n: usize) -> Result<ParamId> {
        self.params.add(name, Tensor::zeros(&[n]))
    }

    fn gru(&mut self, prefix: &str, d: usize, u: usize) -> Result<GruCellParams> {
        Ok(GruCellParams {
            w_z: self.weight(format!("{prefix}.W_z"), &[d, u])?,
            w_r: self.weight(format!("{prefix}.W_r"), &[d, u])?,
            w_h: self.weight(format!("{prefix}.W_h"), &[d, u])?,
            u_z: self.weight(format!("{prefix}.U_z"), &[u, u])?,
            u_r: self.weight(format!("{prefix}.U_r"), &[u, u])?,
            u_h: self.weight(format!("{prefix}.U_h"), &[u, u])?,
            b_z: self.bias(format!("{prefix}.b_z"), u)?,
            b_r: self.bias(format!("{prefix}.b_r"), u)?,
            b_h: self.bias(format!("{prefix}.b_h"), u)?,
        })
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let ModelConfig { d, u, p, q, m, .. } = config;
        let mut b = Builder {
            params: ParamSet::new(),
            seed,
        };
        let gru_fwd = b.gru("gru_fwd", d, u)?;
        let gru_bwd = b.gru("gru_bwd", d, u)?;
        let mut attention = Vec::new();
        let mut heads = Vec::new();
        for name in config.mode.head_names() {
            attention.push(AttentionParams {
                w_a: b.weight(format!("attention.{name}.W_a"), &[2 * u, p])?,
                b_a: b.bias(format!("attention.{name}.b_a"), p)?,
                v_a: b.weight(format!("attention.{name}.v_a"), &[p, 1])?,
            });
            heads.push(MlpParams {
                w1: b.weight(format!("mlp.{name}.W1"), &[2 * u + m, q])?,
                b1: b.bias(format!("mlp.{name}.b1"), q)?,
                w2: b.weight(format!("mlp.{name}.W2"), &[q, 1])?,
                b2: b.bias(format!("mlp.{name}.b2"), 1)?,
            });
        }
        Ok(Model {
            config,
            params: b.params,
            gru_fwd,
            gru_bwd,
            attention,
            heads,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Sets every parameter to zero.
    pub fn zero_params(&mut self) {
        self.params.iter_mut().for_each(|p| p.value.fill(0.0));
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Tensor> {
        self.params.find(name).map(|id| &self.params.get(id).value)
    }

    pub fn param_by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let id = self.params.find(name)?;
        Some(&mut self.params.get_mut(id).value)
    }
}

/// Clamped per-code scores, their total and the binarized label.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalPrediction {
    pub clamped: [f64; NUM_CODES],
    pub total: f64,
    pub label: u8,
}

/// Absorbs the rounding of summing eleven clamped values.
const TOTAL_TOLERANCE: f64 = 1e-9;

pub fn predict_total(scores: &[f64; NUM_CODES]) -> TotalPrediction {
    let clamped = scores.map(|s| s.clamp(0.0, f64::from(MAX_CODE_SCORE)));
    let total: f64 = clamped.iter().sum();
    let label = u8::from(total >= f64::from(COMPETENCE_THRESHOLD) - TOTAL_TOLERANCE);
    TotalPrediction {
        clamped,
        total,
        label,
    }
}
