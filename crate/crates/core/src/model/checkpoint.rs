//! Model checkpoints.
//!
//! Binary (little-endian): magic `"FMDL"`, `K: u32`, `d: u32`, then the
//! `K*d` weights row-major and the `K` biases as `f64`. The JSON export holds
//! the same values as nested arrays for inspection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LinearSoftmaxModel;
use crate::io::{read_file, write_file, LeReader, LeWriter};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FMDL";

pub fn save_checkpoint(model: &LinearSoftmaxModel, path: &Path) -> Result<()> {
    let mut w = LeWriter::with_capacity(12 + model.num_params() * 8);
    w.bytes(MAGIC);
    w.u32(model.num_classes() as u32);
    w.u32(model.dim() as u32);
    for &v in model.params() {
        w.f64(v);
    }
    write_file(path, &w.finish())
}

pub fn load_checkpoint(path: &Path) -> Result<LinearSoftmaxModel> {
    let bytes = read_file(path)?;
    let mut r = LeReader::new(&bytes, path);
    r.magic(MAGIC)?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let n = k
        .checked_mul(d)
        .and_then(|kd| kd.checked_add(k))
        .ok_or_else(|| r.error("parameter count overflows"))?;
    r.expect_remaining(n, 8)?;
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    LinearSoftmaxModel::from_flat(k, d, params).map_err(|e| Error::format(path, 0, e.to_string()))
}

/// Human-readable form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelExport {
    pub num_classes: usize,
    pub dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl From<&LinearSoftmaxModel> for ModelExport {
    fn from(m: &LinearSoftmaxModel) -> Self {
        Self {
            num_classes: m.num_classes(),
            dim: m.dim(),
            weights: m.weights().chunks(m.dim()).map(<[f64]>::to_vec).collect(),
            bias: m.bias().to_vec(),
        }
    }
}

impl TryFrom<ModelExport> for LinearSoftmaxModel {
    type Error = Error;

    fn try_from(e: ModelExport) -> Result<Self> {
        if e.weights.len() != e.num_classes || e.weights.iter().any(|r| r.len() != e.dim) {
            return Err(Error::param("weight rows do not match num_classes x dim"));
        }
        let flat: Vec<f64> = e.weights.concat();
        LinearSoftmaxModel::from_parts(e.num_classes, e.dim, &flat, &e.bias)
    }
}

pub fn save_export(model: &LinearSoftmaxModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&ModelExport::from(model))?;
    write_file(path, text.as_bytes())
}

pub fn load_export(path: &Path) -> Result<LinearSoftmaxModel> {
    let bytes = read_file(path)?;
    let export: ModelExport = serde_json::from_slice(&bytes)?;
    export.try_into()
}
