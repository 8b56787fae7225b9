//! The last-layer classifier that unlearning operates on.
//!
//! A [`LinearSoftmaxModel`] maps a feature vector `x` to class probabilities
//! `softmax(W x + b)`. Any upstream feature extractor is assumed frozen and
//! already applied to the dataset features.
//!
//! Parameters are addressed by one flat index `l`: the `K x d` weight matrix in
//! row-major order, followed by the `K` biases. Fisher vectors and dampening
//! share this indexing.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, load_export, save_checkpoint, save_export, ModelExport};
pub(crate) use train::sgd_epochs;
pub use train::{train, Optimizer, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabelSet, LabeledDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmaxModel {
    num_classes: usize,
    dim: usize,
    params: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            params: vec![0.0; num_classes * dim + num_classes],
        }
    }

    /// Builds a model from row-major `weights` (`K x d`) and `bias` (`K`).
    pub fn from_parts(num_classes: usize, dim: usize, weights: &[f64], bias: &[f64]) -> Result<Self> {
        if weights.len() != num_classes * dim || bias.len() != num_classes {
            return Err(Error::param(format!(
                "expected {} weights and {num_classes} biases, got {} and {}",
                num_classes * dim,
                weights.len(),
                bias.len()
            )));
        }
        let mut params = Vec::with_capacity(weights.len() + bias.len());
        params.extend_from_slice(weights);
        params.extend_from_slice(bias);
        Self::from_flat(num_classes, dim, params)
    }

    /// Builds a model from parameters in flat order.
    pub fn from_flat(num_classes: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::param("model needs K >= 1 and d >= 1"));
        }
        if params.len() != num_classes * dim + num_classes {
            return Err(Error::param(format!(
                "expected {} parameters, got {}",
                num_classes * dim + num_classes,
                params.len()
            )));
        }
        if let Some(l) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("parameter {l} is not finite")));
        }
        Ok(Self {
            num_classes,
            dim,
            params,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// All parameters in flat order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.num_classes * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.num_classes * self.dim..]
    }

    /// Flat index of weight `(class, feature)`.
    pub fn weight_index(&self, class: usize, feature: usize) -> usize {
        class * self.dim + feature
    }

    /// Flat index of the bias of `class`.
    pub fn bias_index(&self, class: usize) -> usize {
        self.num_classes * self.dim + class
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::param(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub(crate) fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        if !ds.is_empty() && ds.dim() != self.dim {
            return Err(Error::param(format!(
                "dataset has dim {}, model expects {}",
                ds.dim(),
                self.dim
            )));
        }
        if ds.num_classes() > self.num_classes {
            return Err(Error::param(format!(
                "dataset has {} classes, model only {}",
                ds.num_classes(),
                self.num_classes
            )));
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        let (w, b) = self.params.split_at(self.num_classes * self.dim);
        for (k, z) in out.iter_mut().enumerate() {
            let row = &w[k * self.dim..(k + 1) * self.dim];
            *z = b[k] + row.iter().zip(x).map(|(&wi, &xi)| wi * f64::from(xi)).sum::<f64>();
        }
    }

    /// Max-shifted softmax of the logits into `out`.
    pub(crate) fn proba_into(&self, x: &[f32], out: &mut [f64]) {
        self.logits_into(x, out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in out.iter_mut() {
            *z = (*z - max).exp();
            total += *z;
        }
        for p in out.iter_mut() {
            *p /= total;
        }
    }

    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.num_classes];
        self.logits_into(x, &mut out);
        Ok(out)
    }

    /// Class probabilities for `x`.
    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.num_classes];
        self.proba_into(x, &mut out);
        Ok(out)
    }

    /// The most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f32]) -> Result<Label> {
        let z = self.logits(x)?;
        Ok(argmax(&z) as Label)
    }

    /// `onehot(y) - p` written into `out`: the gradient of `ln p(y | x)` with
    /// respect to the logits.
    pub(crate) fn residual_into(&self, x: &[f32], y: Label, out: &mut [f64]) {
        self.proba_into(x, out);
        for p in out.iter_mut() {
            *p = -*p;
        }
        out[y as usize] += 1.0;
    }

    /// Unweighted parameter mean, the aggregation rule for merged nodes.
    pub fn mean_of<'a>(models: impl IntoIterator<Item = &'a LinearSoftmaxModel>) -> Result<Self> {
        let models: Vec<&LinearSoftmaxModel> = models.into_iter().collect();
        let first = *models.first().ok_or_else(|| Error::param("mean of zero models"))?;
        let mut params = vec![0.0; first.num_params()];
        for m in &models {
            if m.num_classes != first.num_classes || m.dim != first.dim {
                return Err(Error::param("cannot average models of different shapes"));
            }
            for (acc, v) in params.iter_mut().zip(&m.params) {
                *acc += v;
            }
        }
        let n = models.len() as f64;
        for v in &mut params {
            *v /= n;
        }
        Self::from_flat(first.num_classes, first.dim, params)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient of `ln p(y | x)` with respect to every parameter, in flat order:
/// `(onehot(y) - p) x^T` row-major, then `onehot(y) - p` for the biases.
pub fn loglik_grad_last_layer(model: &LinearSoftmaxModel, x: &[f32], y: Label) -> Result<Vec<f64>> {
    model.check_input(x)?;
    if y as usize >= model.num_classes {
        return Err(Error::param(format!("label {y} outside [0, {})", model.num_classes)));
    }
    let k = model.num_classes;
    let mut r = vec![0.0; k];
    model.residual_into(x, y, &mut r);
    let mut grad = Vec::with_capacity(model.num_params());
    for &rk in &r {
        grad.extend(x.iter().map(|&xi| rk * f64::from(xi)));
    }
    grad.extend_from_slice(&r);
    Ok(grad)
}

/// A classification accuracy, with an explicit marker for empty evaluation
/// sets (whose `value` is reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub value: f64,
    pub correct: usize,
    pub total: usize,
    pub empty: bool,
}

/// Fraction of rows whose prediction equals the label. With `restrict`, only
/// rows labeled in the set are scored.
pub fn accuracy(model: &LinearSoftmaxModel, ds: &LabeledDataset, restrict: Option<&LabelSet>) -> Result<Accuracy> {
    model.check_dataset(ds)?;
    let mut logits = vec![0.0; model.num_classes];
    let (mut correct, mut total) = (0usize, 0usize);
    for (x, y) in ds.iter() {
        if restrict.is_some_and(|r| !r.contains(y)) {
            continue;
        }
        model.logits_into(x, &mut logits);
        total += 1;
        correct += usize::from(argmax(&logits) == y as usize);
    }
    Ok(Accuracy {
        value: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        correct,
        total,
        empty: total == 0,
    })
}
