//! Orchestration: training a graph, FIUn unlearning over its unlearning
//! subgraph, sequential baselines, and evaluation reports.

mod baseline;
mod catalog;
mod fiun;
mod report;
mod train;

pub use baseline::{run_baseline, BaselineKind, DEFAULT_GA_EPOCHS};
pub use catalog::{assign_forget_sets, DataCatalog, DataOrigin};
pub use fiun::run_fiun;
pub use report::{
    evaluate, evaluate_nodes, speedup, FimSource, Method, NodeAccuracy, NodeMetrics, NodeReport, PhaseTimes, Speedup,
    UnlearnReport, CSV_HEADER,
};
pub use train::train_graph;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dataset::{LabelSet, LabeledDataset};
use crate::fim::DampenConfig;
use crate::umig::{DiscoveryMode, NodeId, Umig};
use crate::{Error, Result};

/// A rayon pool with `workers` threads; `0` means available parallelism.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let n = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone)]
pub struct UnlearnRequest {
    pub c_f: LabelSet,
    pub dampen: DampenConfig,
    pub discovery: DiscoveryMode,
    /// Overrides a discovery node's unlearning data. By default it is the
    /// node's training rows labeled in `c_f`.
    pub unlearn_data: BTreeMap<NodeId, String>,
    /// Ignore cached model Fishers and recompute them from node data.
    pub recompute_model_fims: bool,
}

impl UnlearnRequest {
    pub fn new(c_f: LabelSet) -> Self {
        Self {
            c_f,
            dampen: DampenConfig::default(),
            discovery: DiscoveryMode::Metadata,
            unlearn_data: BTreeMap::new(),
            recompute_model_fims: false,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.c_f.is_empty() {
            return Err(Error::param("forget label set is empty"));
        }
        self.c_f.check_within(num_classes)?;
        self.dampen.validate()
    }

    fn unlearning_data(&self, umig: &Umig, catalog: &DataCatalog, id: &NodeId) -> Result<Arc<LabeledDataset>> {
        let ds = match self.unlearn_data.get(id) {
            Some(r) => catalog.resolve(r)?.filter_labels(|l| self.c_f.contains(l)),
            None => catalog.node_data(umig, id)?.0.filter_labels(|l| self.c_f.contains(l)),
        };
        if ds.is_empty() {
            return Err(Error::config(format!(
                "discovery node {id} has no rows of the forget labels"
            )));
        }
        Ok(Arc::new(ds))
    }
}

fn seconds(d: std::time::Duration) -> f64 {
    d.as_secs_f64()
}
