use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledDataset};
use crate::{seed, Error, Result};

/// Default separation of the class means; a linear softmax trained with the
/// default schedule on the default 10-class, 20-dimensional blobs reaches well
/// above 95% training accuracy at this scale (see the calibration test).
pub const DEFAULT_CENTER_SCALE: f64 = 4.0;

/// Parameters of an isotropic Gaussian blob dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 20,
            samples_per_class: 1000,
            center_scale: DEFAULT_CENTER_SCALE,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::param("blobs need at least 2 classes"));
        }
        if self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::param("blobs need dim >= 1 and samples_per_class >= 1"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma must be positive and finite"));
        }
        if !(self.center_scale >= 0.0 && self.center_scale.is_finite()) {
            return Err(Error::param("center_scale must be nonnegative and finite"));
        }
        Ok(())
    }

    /// The class means, each of length `center_scale`. With `K <= d` they
    /// form a random orthogonal frame (Gram-Schmidt on Gaussian draws);
    /// otherwise they are independent uniformly random directions.
    pub fn centers(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = seed::rng(seed::derive(self.seed, "blob-centers"));
        let orthogonal = self.num_classes <= self.dim;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.num_classes);
        while out.len() < self.num_classes {
            let mut v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            if orthogonal {
                for u in &out {
                    let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    for (a, b) in v.iter_mut().zip(u) {
                        *a -= dot * b;
                    }
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            // A degenerate draw is redrawn.
            if norm > 1e-9 {
                out.push(v.into_iter().map(|a| a / norm).collect());
            }
        }
        for c in &mut out {
            c.iter_mut().for_each(|a| *a *= self.center_scale);
        }
        Ok(out)
    }
}

/// Draws `samples_per_class` rows per class, class-major, from
/// `N(center_k, noise_sigma^2 I)`. A pure function of `spec`.
pub fn synth_gaussian_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    let centers = spec.centers()?;
    let mut rng = seed::rng(seed::derive(spec.seed, "blob-noise"));
    let n = spec.num_classes * spec.samples_per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for &c in center {
                let z: f64 = rng.sample(StandardNormal);
                features.push((c + spec.noise_sigma * z) as f32);
            }
            labels.push(k as Label);
        }
    }
    LabeledDataset::new(features, labels, spec.dim, spec.num_classes)
}
