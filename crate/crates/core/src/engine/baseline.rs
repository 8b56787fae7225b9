use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate_nodes, seconds, DataCatalog, UnlearnRequest};
use super::{Method, NodeMetrics, NodeReport, PhaseTimes, UnlearnReport};
use crate::model::{sgd_epochs, train, LinearSoftmaxModel, TrainConfig};
use crate::seed;
use crate::umig::Umig;
use crate::umig::{find_discovery_nodes, unlearning_subgraph, NodeId, NodeRole};
use crate::{Error, Result};

pub const DEFAULT_GA_EPOCHS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    /// Retrain each node on its retained rows, children starting from their
    /// retrained parents and roots from zeros.
    Retrain,
    /// Continue training the current parameters on the retained rows.
    Finetune,
    /// Loss-ascent epochs over the forget rows.
    GradientAscent { epochs: usize },
}

impl BaselineKind {
    pub fn method(self) -> Method {
        match self {
            BaselineKind::Retrain => Method::Retrain,
            BaselineKind::Finetune => Method::Finetune,
            BaselineKind::GradientAscent { .. } => Method::GradientAscent,
        }
    }
}

/// Runs a baseline over the unlearning subgraph one node at a time in
/// topological order. A node's cumulative time is its own time plus the
/// largest cumulative time among its subgraph parents (or the discovery
/// time at a subgraph root).
pub fn run_baseline(
    umig: &Umig,
    catalog: &DataCatalog,
    request: &UnlearnRequest,
    kind: BaselineKind,
    cfg: &TrainConfig,
) -> Result<(Umig, UnlearnReport)> {
    request.validate(catalog.num_classes())?;
    match kind {
        BaselineKind::GradientAscent { .. } => {
            TrainConfig {
                epochs: 1,
                ..cfg.clone()
            }
            .validate()?;
        }
        _ => cfg.validate()?,
    }
    let start = Instant::now();
    let discovery = find_discovery_nodes(umig, &request.c_f, &request.discovery)?;
    let ug = unlearning_subgraph(umig, &discovery)?;
    let discovery_s = seconds(start.elapsed());

    let mut updated = umig.clone();
    let mut own: HashMap<NodeId, f64> = HashMap::new();
    let mut cumulative: HashMap<NodeId, f64> = HashMap::new();
    let order: Vec<NodeId> = ug.subgraph.topo_order().into_iter().cloned().collect();
    for id in &order {
        let t = Instant::now();
        let node = umig.node(id)?;
        let current = node
            .model
            .as_ref()
            .ok_or_else(|| Error::config(format!("node {id} has no model")))?;
        let (data, _) = catalog.node_data(umig, id)?;
        let retain = data.filter_labels(|l| !request.c_f.contains(l));
        let label = format!("{}/{id}", kind.method());
        let node_cfg = TrainConfig {
            seed: seed::derive(cfg.seed, &label),
            ..cfg.clone()
        };
        let model = match kind {
            BaselineKind::Retrain => {
                // Parents outside the subgraph are unaffected and keep their models.
                let parents: Vec<&LinearSoftmaxModel> = umig
                    .parents(id)?
                    .into_iter()
                    .map(|p| {
                        updated
                            .node(p)?
                            .model
                            .as_ref()
                            .ok_or_else(|| Error::config(format!("node {p} has no model")))
                    })
                    .collect::<Result<_>>()?;
                let init = if parents.is_empty() {
                    LinearSoftmaxModel::zeros(current.num_classes(), current.dim())
                } else {
                    LinearSoftmaxModel::mean_of(parents)?
                };
                let trains = node.role == NodeRole::Trainer || node.dataset_ref.is_some();
                if trains && !retain.is_empty() {
                    train(Some(&init), &retain, &node_cfg)?
                } else {
                    init
                }
            }
            BaselineKind::Finetune => {
                if retain.is_empty() {
                    current.clone()
                } else {
                    train(Some(current), &retain, &node_cfg)?
                }
            }
            BaselineKind::GradientAscent { epochs } => {
                let forget = data.filter_labels(|l| request.c_f.contains(l));
                let mut m = current.clone();
                if epochs > 0 && !forget.is_empty() {
                    sgd_epochs(&mut m, &forget, &TrainConfig { epochs, ..node_cfg }, -1.0);
                    m = LinearSoftmaxModel::from_flat(m.num_classes(), m.dim(), m.params().to_vec())
                        .map_err(|_| Error::Invariant(format!("gradient ascent diverged at node {id}")))?;
                }
                m
            }
        };
        updated.set_model_fim(id, None)?;
        updated.set_model(id, model)?;
        let elapsed = seconds(t.elapsed());
        let before = ug
            .subgraph
            .parents(id)?
            .into_iter()
            .map(|p| cumulative[p])
            .fold(discovery_s, f64::max);
        own.insert(id.clone(), elapsed);
        cumulative.insert(id.clone(), before + elapsed);
    }
    let total_s = seconds(start.elapsed());

    let acc = evaluate_nodes(&updated, &request.c_f, catalog, &order)?;
    let nodes = order
        .iter()
        .map(|id| NodeReport {
            id: id.clone(),
            metrics: NodeMetrics {
                accuracy: acc[id],
                unlearn_time_s: own[id],
                cumulative_time_s: cumulative[id],
                triggered_param_count: 0,
                dampen_passes: 0,
                model_fim_source: None,
            },
            triggered: Vec::new(),
        })
        .collect();
    let report = UnlearnReport {
        method: kind.method(),
        c_f: request.c_f.clone(),
        discovery: discovery.into_iter().collect(),
        nodes,
        phases: PhaseTimes {
            discovery_s,
            update_s: total_s - discovery_s,
            total_s,
            ..PhaseTimes::default()
        },
    };
    Ok((updated, report))
}
