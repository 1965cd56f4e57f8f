use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mode, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    mode: Mode,
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

/// Serializes `model`. Floats are written in shortest round-trip form, so a
/// reload reproduces every value exactly.
pub fn model_to_json(model: &Model) -> Result<String> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        mode: model.config.mode,
        config: model.config,
        tensors: model
            .params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let version: serde_json::Value = serde_json::from_str(text)?;
    match version.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
        Some(v) => return Err(Error::Version(v.try_into().unwrap_or(u32::MAX))),
        None => return Err(Error::Validation("model file has no format_version".into())),
    }
    let file: ModelFile = serde_json::from_value(version)?;
    if file.mode != file.config.mode {
        return Err(Error::Validation(format!(
            "model file mode `{}` disagrees with its config (`{}`)",
            file.mode, file.config.mode
        )));
    }
    let mut model = Model::new(file.config, 0)?;
    if file.tensors.len() != model.params.len() {
        return Err(Error::Validation(format!(
            "model file has {} tensors, expected {}",
            file.tensors.len(),
            model.params.len()
        )));
    }
    for p in model.params.iter_mut() {
        let t = file
            .tensors
            .get(&p.name)
            .ok_or_else(|| Error::Validation(format!("model file lacks tensor `{}`", p.name)))?;
        if t.shape() != p.value.shape() || t.len() != p.value.len() {
            return Err(Error::Validation(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.clone();
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_json(&fs::read_to_string(path)?)
}

/// Loads a model and checks that it was trained in `mode`.
pub fn load_model_as(path: &Path, mode: Mode) -> Result<Model> {
    let model = load_model(path)?;
    if model.config.mode != mode {
        return Err(Error::Mode {
            expected: mode.to_string(),
            found: model.config.mode.to_string(),
        });
    }
    Ok(model)
}
