//! Diagonal empirical Fisher information over last-layer parameters, the
//! element-wise-max merge of unlearning Fishers, and the dampening update.
//!
//! For a model and a dataset the diagonal Fisher is
//! `F_l = (1/N) * sum_i g_{i,l}^2`, where `g_i` is the gradient of
//! `ln p(y_i | x_i)` at the observed label. Evaluated on a discovery node's
//! forgotten rows it is that node's unlearning Fisher; evaluated on a node's
//! full training data it is the node's model Fisher.

mod file;

pub use file::{load_fim, save_fim};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::model::LinearSoftmaxModel;
use crate::{Error, Result};

/// Rows per partial accumulator. Fixed, so the summation order and hence the
/// result do not depend on how many threads run the partitions.
const CHUNK_ROWS: usize = 256;

/// Per-parameter nonnegative importance, aligned with the model's flat
/// parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalFim {
    values: Vec<f64>,
    sample_count: u64,
}

impl DiagonalFim {
    /// Rejects negative or non-finite entries.
    pub fn new(values: Vec<f64>, sample_count: u64) -> Result<Self> {
        if let Some(l) = values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Invariant(format!(
                "Fisher entry {l} is {} (must be finite and >= 0)",
                values[l]
            )));
        }
        Ok(Self { values, sample_count })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            sample_count: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of samples the expectation ran over (summed across merged inputs).
    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }
}

/// Diagonal empirical Fisher of `model` over `ds`, computed sequentially.
pub fn compute_fim(model: &LinearSoftmaxModel, ds: &LabeledDataset) -> Result<DiagonalFim> {
    compute_fim_with(model, ds, None)
}

/// As [`compute_fim`], spreading the fixed row partitions over `pool`. The
/// result is bit-identical to the sequential one.
pub fn compute_fim_with(
    model: &LinearSoftmaxModel,
    ds: &LabeledDataset,
    pool: Option<&rayon::ThreadPool>,
) -> Result<DiagonalFim> {
    if ds.is_empty() {
        return Err(Error::param("Fisher over an empty dataset"));
    }
    model.check_dataset(ds)?;
    let chunks: Vec<(usize, usize)> = (0..ds.len())
        .step_by(CHUNK_ROWS)
        .map(|s| (s, (s + CHUNK_ROWS).min(ds.len())))
        .collect();
    let partials: Vec<Vec<f64>> = match pool {
        Some(pool) => pool.install(|| {
            chunks
                .par_iter()
                .map(|&(s, e)| squared_grad_sum(model, ds, s, e))
                .collect()
        }),
        None => chunks.iter().map(|&(s, e)| squared_grad_sum(model, ds, s, e)).collect(),
    };
    let mut total = vec![0.0; model.num_params()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let n = ds.len() as f64;
    for t in &mut total {
        *t /= n;
    }
    DiagonalFim::new(total, ds.len() as u64)
}

/// `sum_{i in start..end} g_{i,l}^2`. The gradient of row `i` factors as
/// `r_k x_j` for weight `(k, j)` and `r_k` for bias `k`, with
/// `r = onehot(y) - p`, so its square is accumulated without materializing g.
fn squared_grad_sum(model: &LinearSoftmaxModel, ds: &LabeledDataset, start: usize, end: usize) -> Vec<f64> {
    let (k, d) = (model.num_classes(), model.dim());
    let mut acc = vec![0.0; model.num_params()];
    let mut r = vec![0.0; k];
    for i in start..end {
        let x = ds.row(i);
        model.residual_into(x, ds.label(i), &mut r);
        let (aw, ab) = acc.split_at_mut(k * d);
        for (c, &rc) in r.iter().enumerate() {
            let r2 = rc * rc;
            for (a, &xi) in aw[c * d..(c + 1) * d].iter_mut().zip(x) {
                let xi = f64::from(xi);
                *a += r2 * xi * xi;
            }
            ab[c] += r2;
        }
    }
    acc
}

/// Element-wise maximum. A single input comes back unchanged.
pub fn merge_fims<'a>(fims: impl IntoIterator<Item = &'a DiagonalFim>) -> Result<DiagonalFim> {
    let mut iter = fims.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::param("merge of zero Fisher matrices"))?;
    let mut merged = first.clone();
    for f in iter {
        if f.len() != merged.len() {
            return Err(Error::param(format!(
                "cannot merge Fisher matrices of length {} and {}",
                merged.len(),
                f.len()
            )));
        }
        for (m, &v) in merged.values.iter_mut().zip(&f.values) {
            if v > *m {
                *m = v;
            }
        }
        merged.sample_count += f.sample_count;
    }
    Ok(merged)
}

/// Dampening hyperparameters: `tau` scales the importance ratio, `gamma` is
/// the selection threshold, `eta` caps the retained fraction of a selected
/// parameter. Setting `eta = 1` gives the uncapped selective synaptic
/// dampening behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DampenConfig {
    pub tau: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Default for DampenConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            gamma: 1.0,
            eta: 0.1,
        }
    }
}

impl DampenConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !finite_nonneg(self.tau) || !finite_nonneg(self.gamma) {
            return Err(Error::param("tau and gamma must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::param("eta must lie in [0, 1]"));
        }
        Ok(())
    }

    /// The multiplier for one parameter, or `None` when it is not selected.
    ///
    /// Selected iff `merged / model > gamma`. A zero model entry with a
    /// positive merged entry counts as an infinite ratio (selected, factor
    /// 0); both zero counts as no evidence (not selected).
    pub fn factor(&self, model_fim: f64, merged_fim: f64) -> Option<f64> {
        if model_fim == 0.0 {
            return (merged_fim > 0.0).then(|| (self.tau * 0.0).min(self.eta));
        }
        let ratio = merged_fim / model_fim;
        (ratio > self.gamma).then(|| (self.tau * model_fim / merged_fim).min(self.eta))
    }
}

/// The dampened model and the flat indices that were scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct DampenOutcome {
    pub model: LinearSoftmaxModel,
    pub triggered: Vec<usize>,
}

/// Scales each selected parameter `w_l` to `min(tau * F_l / M_l, eta) * w_l`,
/// where `F` is the node's model Fisher and `M` its merged unlearning Fisher.
/// Unselected parameters are copied bit-for-bit.
pub fn dampen(
    model: &LinearSoftmaxModel,
    model_fim: &DiagonalFim,
    merged_fim: &DiagonalFim,
    cfg: &DampenConfig,
) -> Result<DampenOutcome> {
    cfg.validate()?;
    let n = model.num_params();
    if model_fim.len() != n || merged_fim.len() != n {
        return Err(Error::param(format!(
            "model has {n} parameters, Fisher lengths are {} and {}",
            model_fim.len(),
            merged_fim.len()
        )));
    }
    // DiagonalFim enforces this at construction; deserialized values are rechecked here.
    for (name, f) in [("model", model_fim), ("merged", merged_fim)] {
        if let Some(l) = f.values.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Invariant(format!("{name} Fisher entry {l} is {}", f.values[l])));
        }
    }
    let mut out = model.clone();
    let mut triggered = Vec::new();
    for (l, w) in out.params_mut().iter_mut().enumerate() {
        if let Some(factor) = cfg.factor(model_fim.values[l], merged_fim.values[l]) {
            *w *= factor;
            triggered.push(l);
        }
    }
    Ok(DampenOutcome { model: out, triggered })
}
