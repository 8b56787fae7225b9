//! Labeled feature datasets: construction, splitting by label, sharding, and
//! the on-disk formats.
//!
//! Features are stored as `f32` so that the raw binary format round-trips
//! exactly; all arithmetic on them happens in `f64`.

mod format;
mod labels;
mod synth;

pub use format::{load_csv, load_dataset, save_dataset, DatasetFormat};
pub use labels::{build_overlap_label_sets, Label, LabelSet};
pub use synth::{synth_gaussian_blobs, BlobSpec, DEFAULT_CENTER_SCALE};

use rand::seq::SliceRandom;

use crate::{seed, Error, Result};

/// A feature matrix (`len × dim`, row-major) with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f32>,
    labels: Vec<Label>,
    dim: usize,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f32>, labels: Vec<Label>, dim: usize, num_classes: usize) -> Result<Self> {
        if !labels.is_empty() && dim == 0 {
            return Err(Error::param("a nonempty dataset needs dim >= 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::param(format!(
                "{} feature values do not form {} rows of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::param(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            dim,
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    /// Iterates `(features, label)` pairs in row order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f32], Label)> + '_ {
        // chunks_exact(0) panics; an empty dataset may have dim 0.
        let dim = self.dim.max(1);
        self.features
            .chunks_exact(dim)
            .zip(self.labels.iter().copied())
            .take(self.labels.len())
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    /// Rows whose label satisfies `keep`, preserving order.
    pub fn filter_labels(&self, keep: impl Fn(Label) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        self.subset(&idx)
    }

    /// The labels that actually occur in the data.
    pub fn present_labels(&self) -> LabelSet {
        self.labels.iter().copied().collect()
    }

    /// Row-wise concatenation. All parts must agree on `num_classes`, and on
    /// `dim` unless they are empty.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LabeledDataset>) -> Result<Self> {
        let mut out: Option<Self> = None;
        for part in parts {
            match &mut out {
                None => out = Some(part.clone()),
                Some(acc) => {
                    if acc.num_classes != part.num_classes {
                        return Err(Error::param(format!(
                            "cannot concatenate datasets with {} and {} classes",
                            acc.num_classes, part.num_classes
                        )));
                    }
                    if acc.is_empty() {
                        acc.dim = part.dim;
                    } else if !part.is_empty() && acc.dim != part.dim {
                        return Err(Error::param(format!(
                            "cannot concatenate datasets of dim {} and {}",
                            acc.dim, part.dim
                        )));
                    }
                    acc.features.extend_from_slice(&part.features);
                    acc.labels.extend_from_slice(&part.labels);
                }
            }
        }
        out.ok_or_else(|| Error::param("concatenation of zero datasets"))
    }
}

/// Splits `ds` into the rows labeled in `c_f` and the rest. Both parts keep
/// the input row order.
pub fn split_by_labels(ds: &LabeledDataset, c_f: &LabelSet) -> Result<(LabeledDataset, LabeledDataset)> {
    c_f.check_within(ds.num_classes())?;
    let forget = ds.filter_labels(|l| c_f.contains(l));
    let retain = ds.filter_labels(|l| !c_f.contains(l));
    Ok((forget, retain))
}

/// Randomly partitions `ds` into `k` disjoint shards whose sizes differ by at
/// most one. Rows inside a shard keep their original relative order.
pub fn shard(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<LabeledDataset>> {
    if k == 0 {
        return Err(Error::param("shard count must be >= 1"));
    }
    if k > ds.len() {
        return Err(Error::param(format!(
            "cannot cut {} rows into {k} nonempty shards",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let base = ds.len() / k;
    let extra = ds.len() % k;
    let mut shards = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut idx = order[start..start + size].to_vec();
        idx.sort_unstable();
        shards.push(ds.subset(&idx));
        start += size;
    }
    Ok(shards)
}
