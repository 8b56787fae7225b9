//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use fiun::dataset::{
    build_overlap_label_sets, load_csv, load_dataset, synth_gaussian_blobs, BlobSpec, DatasetFormat, Label, LabelSet,
    LabeledDataset, DEFAULT_CENTER_SCALE,
};
use fiun::engine::{BaselineKind, Method, UnlearnRequest, DEFAULT_GA_EPOCHS};
use fiun::fim::DampenConfig;
use fiun::model::{Optimizer, TrainConfig};
use fiun::seed::derive;
use fiun::umig::{DiscoveryMode, Topology};

/// A complete experiment. Only `seed`, `dataset` and `topology` are required.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub topology: Topology,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub unlearn: UnlearnSection,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic(SyntheticSection),
    /// A dataset file. A relative `path` is taken from the config file's
    /// directory and is made absolute by [`parse_config`].
    File {
        path: PathBuf,
        format: DatasetFormat,
        #[serde(default)]
        num_classes: Option<usize>,
    },
}

/// Gaussian blobs; the generator seed is derived from the global seed.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = BlobSpec::default();
        Self {
            num_classes: d.num_classes,
            dim: d.dim,
            samples_per_class: d.samples_per_class,
            center_scale: DEFAULT_CENTER_SCALE,
            noise_sigma: d.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            optimizer: d.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnlearnSection {
    /// Forget labels. Defaults to `[0]` unless `overlap` is given.
    pub labels: Option<Vec<Label>>,
    /// Per-root forget sets sharing a common core.
    pub overlap: Option<OverlapSection>,
    pub dampen: DampenConfig,
    pub discovery: DiscoverySection,
    pub recompute_model_fims: bool,
    pub ga_epochs: usize,
}

impl Default for UnlearnSection {
    fn default() -> Self {
        Self {
            labels: None,
            overlap: None,
            dampen: DampenConfig::default(),
            discovery: DiscoverySection::Metadata,
            recompute_model_fims: false,
            ga_epochs: DEFAULT_GA_EPOCHS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapSection {
    pub per_node: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscoverySection {
    #[default]
    Metadata,
    /// Probe every node on the base rows of the forget labels.
    Accuracy { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Relative to the config file's directory.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Fiun,
    Retrain,
    Finetune,
    #[serde(alias = "gradient_ascent")]
    Ga,
}

impl MethodName {
    pub fn method(self) -> Method {
        match self {
            MethodName::Fiun => Method::Fiun,
            MethodName::Retrain => Method::Retrain,
            MethodName::Finetune => Method::Finetune,
            MethodName::Ga => Method::GradientAscent,
        }
    }
}

impl From<Method> for MethodName {
    fn from(m: Method) -> Self {
        match m {
            Method::Fiun => MethodName::Fiun,
            Method::Retrain => MethodName::Retrain,
            Method::Finetune => MethodName::Finetune,
            Method::GradientAscent => MethodName::Ga,
        }
    }
}

fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Fiun]
}

/// Reads and validates a JSON config. Schema errors name the offending key
/// path, e.g. `train: unknown field `learningrate``.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_config_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    cfg.resolve_paths(base)?;
    Ok(cfg)
}

/// Parses and validates config text. Relative paths are left as written.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            anyhow::anyhow!("{inner}")
        } else {
            anyhow::anyhow!("at `{path}`: {inner}")
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.methods.is_empty(), "`methods` must list at least one method");
        let mut seen = self.methods.clone();
        seen.sort_unstable();
        seen.dedup();
        ensure!(seen.len() == self.methods.len(), "`methods` lists a method twice");
        self.training(0).validate().context("at `train`")?;
        self.unlearn.dampen.validate().context("at `unlearn.dampen`")?;
        match (&self.unlearn.labels, &self.unlearn.overlap) {
            (Some(_), Some(_)) => bail!("`unlearn.labels` and `unlearn.overlap` are mutually exclusive"),
            (Some(l), None) => ensure!(!l.is_empty(), "`unlearn.labels` is empty"),
            _ => {}
        }
        if let DiscoverySection::Accuracy { threshold } = self.unlearn.discovery {
            ensure!(
                (0.0..=1.0).contains(&threshold),
                "`unlearn.discovery.threshold` must lie in [0, 1]"
            );
        }
        if let DatasetConfig::Synthetic(_) = self.dataset {
            self.blob_spec()?.validate().context("at `dataset.synthetic`")?;
            if let Some(labels) = &self.unlearn.labels {
                let k = self.blob_spec()?.num_classes;
                labels
                    .iter()
                    .copied()
                    .collect::<LabelSet>()
                    .check_within(k)
                    .context("at `unlearn.labels`")?;
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        if let DatasetConfig::File { path, .. } = &mut self.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            ensure!(
                path.is_file(),
                "at `dataset.file.path`: {} does not exist",
                path.display()
            );
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
        Ok(())
    }

    pub fn blob_spec(&self) -> Result<BlobSpec> {
        match &self.dataset {
            DatasetConfig::Synthetic(s) => Ok(BlobSpec {
                num_classes: s.num_classes,
                dim: s.dim,
                samples_per_class: s.samples_per_class,
                center_scale: s.center_scale,
                noise_sigma: s.noise_sigma,
                seed: derive(self.seed, "dataset"),
            }),
            DatasetConfig::File { .. } => bail!("dataset is a file, not synthetic"),
        }
    }

    /// Generates or loads the base dataset.
    pub fn load_base(&self) -> Result<LabeledDataset> {
        match &self.dataset {
            DatasetConfig::Synthetic(_) => Ok(synth_gaussian_blobs(&self.blob_spec()?)?),
            DatasetConfig::File {
                path,
                format,
                num_classes,
            } => {
                let ds = match format {
                    DatasetFormat::Csv => load_csv(path, *num_classes)?,
                    DatasetFormat::RawF32 => load_dataset(path, *format)?,
                };
                if let Some(k) = num_classes {
                    ensure!(
                        ds.num_classes() == *k,
                        "{} holds {} classes, config says {k}",
                        path.display(),
                        ds.num_classes()
                    );
                }
                Ok(ds)
            }
        }
    }

    pub fn training(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed,
            optimizer: self.train.optimizer,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.training(derive(self.seed, "train"))
    }

    pub fn catalog_seed(&self) -> u64 {
        derive(self.seed, "catalog")
    }

    pub fn topology_seed(&self) -> u64 {
        derive(self.seed, "topology")
    }

    /// Per-root forget sets when `unlearn.overlap` is set.
    pub fn overlap_sets(&self, num_classes: usize, num_roots: usize) -> Result<Option<Vec<LabelSet>>> {
        let Some(o) = self.unlearn.overlap else {
            return Ok(None);
        };
        let sets = build_overlap_label_sets(
            num_classes,
            o.per_node,
            num_roots,
            o.fraction,
            derive(self.seed, "overlap"),
        )
        .context("at `unlearn.overlap`")?;
        Ok(Some(sets))
    }

    /// The forget set: the explicit labels, the union of the overlap sets,
    /// or `{0}`.
    pub fn forget_set(&self, num_classes: usize, num_roots: usize) -> Result<LabelSet> {
        let c_f = match (&self.unlearn.labels, self.overlap_sets(num_classes, num_roots)?) {
            (Some(l), _) => l.iter().copied().collect(),
            (None, Some(sets)) => sets.iter().fold(LabelSet::default(), |acc, s| acc.union(s)),
            (None, None) => LabelSet::from([0]),
        };
        c_f.check_within(num_classes).context("at `unlearn.labels`")?;
        Ok(c_f)
    }

    pub fn request(&self, c_f: LabelSet, base: &LabeledDataset) -> UnlearnRequest {
        let mut req = UnlearnRequest::new(c_f);
        req.dampen = self.unlearn.dampen;
        req.recompute_model_fims = self.unlearn.recompute_model_fims;
        if let DiscoverySection::Accuracy { threshold } = self.unlearn.discovery {
            let probe = base.filter_labels(|l| req.c_f.contains(l));
            req.discovery = DiscoveryMode::Accuracy {
                threshold,
                probe: Some(probe),
            };
        }
        req
    }

    pub fn baseline(&self, method: MethodName) -> Option<BaselineKind> {
        match method {
            MethodName::Fiun => None,
            MethodName::Retrain => Some(BaselineKind::Retrain),
            MethodName::Finetune => Some(BaselineKind::Finetune),
            MethodName::Ga => Some(BaselineKind::GradientAscent {
                epochs: self.unlearn.ga_epochs,
            }),
        }
    }
}
