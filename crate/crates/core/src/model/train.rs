use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LinearSoftmaxModel;
use crate::dataset::LabeledDataset;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
}

/// Mini-batch training schedule. Defaults: SGD, learning rate 0.1, 100 epochs,
/// batches of 64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Minimizes mean cross-entropy on `ds` by mini-batch SGD, starting from
/// `init` (or zeros). Each epoch visits the rows in a fresh permutation drawn
/// from `cfg.seed`, so equal inputs give bit-identical models.
pub fn train(init: Option<&LinearSoftmaxModel>, ds: &LabeledDataset, cfg: &TrainConfig) -> Result<LinearSoftmaxModel> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::param("cannot train on an empty dataset"));
    }
    let mut model = match init {
        Some(m) => m.clone(),
        None => LinearSoftmaxModel::zeros(ds.num_classes(), ds.dim()),
    };
    model.check_dataset(ds)?;
    sgd_epochs(&mut model, ds, cfg, 1.0);
    LinearSoftmaxModel::from_flat(model.num_classes, model.dim, model.params)
}

/// Runs `cfg.epochs` epochs of mini-batch updates `w += direction * lr *
/// mean(grad ln p)`. `direction = 1` is ordinary likelihood ascent (loss
/// descent); `-1` ascends the loss. The caller validates `cfg`.
pub(crate) fn sgd_epochs(model: &mut LinearSoftmaxModel, ds: &LabeledDataset, cfg: &TrainConfig, direction: f64) {
    let (k, d) = (model.num_classes, model.dim);
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut grad = vec![0.0; model.num_params()];
    let mut r = vec![0.0; k];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = ds.row(i);
                model.residual_into(x, ds.label(i), &mut r);
                let (gw, gb) = grad.split_at_mut(k * d);
                for (c, &rc) in r.iter().enumerate() {
                    for (g, &xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *g += rc * f64::from(xi);
                    }
                    gb[c] += rc;
                }
            }
            let step = direction * cfg.learning_rate / batch.len() as f64;
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p += step * g;
            }
        }
    }
}
