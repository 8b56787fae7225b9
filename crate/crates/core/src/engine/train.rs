use std::collections::HashMap;

use rayon::prelude::*;

use super::DataCatalog;
use crate::fim::compute_fim;
use crate::model::{train, LinearSoftmaxModel, TrainConfig};
use crate::seed;
use crate::umig::{NodeId, NodeRole, Umig};
use crate::{Error, Result};

/// Trains every node in dependency order and caches its model Fisher.
///
/// A trainer starts from the mean of its parents (zeros at a root) and
/// trains on its data. An aggregator takes its parents' mean and trains
/// further only when it has a dataset of its own. Nodes at equal depth are
/// independent and run on `pool`. Each node's `train_labels` is replaced by
/// the labels present in its data.
pub fn train_graph(umig: &Umig, catalog: &DataCatalog, cfg: &TrainConfig, pool: &rayon::ThreadPool) -> Result<Umig> {
    cfg.validate()?;
    let (k, d) = (catalog.num_classes(), catalog.base().dim());
    let mut depth: HashMap<&NodeId, usize> = HashMap::new();
    let mut levels: Vec<Vec<&NodeId>> = Vec::new();
    for id in umig.topo_order() {
        let lvl = umig.parents(id)?.iter().map(|p| depth[p] + 1).max().unwrap_or(0);
        depth.insert(id, lvl);
        if levels.len() <= lvl {
            levels.resize_with(lvl + 1, Vec::new);
        }
        levels[lvl].push(id);
    }

    let mut out = umig.clone();
    for level in levels {
        let trained: Vec<Result<(NodeId, LinearSoftmaxModel, crate::fim::DiagonalFim, _)>> = pool.install(|| {
            level
                .par_iter()
                .map(|&id| {
                    let node = out.node(id)?;
                    let parents: Vec<&LinearSoftmaxModel> = out
                        .parents(id)?
                        .into_iter()
                        .map(|p| out.node(p).map(|n| n.model.as_ref().expect("parents train first")))
                        .collect::<Result<_>>()?;
                    let init = if parents.is_empty() {
                        None
                    } else {
                        Some(LinearSoftmaxModel::mean_of(parents)?)
                    };
                    let (data, _) = catalog.node_data(&out, id)?;
                    let node_cfg = TrainConfig {
                        seed: seed::derive(cfg.seed, &format!("train/{id}")),
                        ..cfg.clone()
                    };
                    let model = match node.role {
                        NodeRole::Trainer => {
                            if data.is_empty() {
                                return Err(Error::config(format!("node {id} has an empty training set")));
                            }
                            train(init.as_ref(), &data, &node_cfg)?
                        }
                        NodeRole::Aggregator => {
                            let mean = init.ok_or_else(|| Error::config(format!("aggregator {id} has no parents")))?;
                            if node.dataset_ref.is_some() && !data.is_empty() {
                                train(Some(&mean), &data, &node_cfg)?
                            } else {
                                mean
                            }
                        }
                    };
                    if model.num_classes() != k || model.dim() != d {
                        return Err(Error::config(format!("node {id} model shape does not match the data")));
                    }
                    let fim = compute_fim(&model, &data)?;
                    Ok((id.clone(), model, fim, data.present_labels()))
                })
                .collect()
        });
        for item in trained {
            let (id, model, fim, labels) = item?;
            out.set_model_fim(&id, None)?;
            out.set_train_labels(&id, labels)?;
            out.set_model(&id, model)?;
            out.set_model_fim(&id, Some(fim))?;
        }
    }
    Ok(out)
}
