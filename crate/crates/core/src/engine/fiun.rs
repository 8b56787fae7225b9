use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;

use super::{evaluate_nodes, seconds, DataCatalog, DataOrigin, UnlearnRequest};
use super::{FimSource, Method, NodeMetrics, NodeReport, PhaseTimes, UnlearnReport};
use crate::fim::{compute_fim, dampen, merge_fims, DampenOutcome, DiagonalFim};
use crate::model::LinearSoftmaxModel;
use crate::umig::{find_discovery_nodes, unlearning_subgraph, NodeId, Umig};
use crate::{Error, Result};

struct NodeJob {
    id: NodeId,
    outcome: DampenOutcome,
    source: FimSource,
    model_fim_s: f64,
    merge_s: f64,
    dampen_s: f64,
    finished_s: f64,
}

fn model_of<'a>(umig: &'a Umig, id: &NodeId) -> Result<&'a LinearSoftmaxModel> {
    umig.node(id)?
        .model
        .as_ref()
        .ok_or_else(|| Error::config(format!("node {id} has no model")))
}

/// Fisher inheritance unlearning.
///
/// Discovery nodes are located and their subgraph extracted; each discovery
/// node's unlearning Fisher is computed over its forget rows; then every
/// subgraph node independently obtains its model Fisher, merges the unlearning
/// Fishers of the discovery nodes it descends from, and is dampened once.
/// Both parallel phases run on `pool`, and each job is sequential inside, so
/// the result does not depend on the number of workers. Updated nodes lose
/// their cached model Fisher; nodes outside the subgraph are copied verbatim.
pub fn run_fiun(
    umig: &Umig,
    catalog: &DataCatalog,
    request: &UnlearnRequest,
    pool: &rayon::ThreadPool,
) -> Result<(Umig, UnlearnReport)> {
    request.validate(catalog.num_classes())?;
    let start = Instant::now();
    let discovery = find_discovery_nodes(umig, &request.c_f, &request.discovery)?;
    let ug = unlearning_subgraph(umig, &discovery)?;
    let discovery_s = seconds(start.elapsed());

    let t = Instant::now();
    let discovery_ids: Vec<&NodeId> = discovery.iter().collect();
    let unlearning: Vec<Result<DiagonalFim>> = pool.install(|| {
        discovery_ids
            .par_iter()
            .map(|&id| {
                let data = request.unlearning_data(umig, catalog, id)?;
                compute_fim(model_of(umig, id)?, &data)
            })
            .collect()
    });
    let mut unlearning_fims: HashMap<&NodeId, DiagonalFim> = HashMap::with_capacity(discovery.len());
    for (id, fim) in discovery_ids.iter().zip(unlearning) {
        unlearning_fims.insert(id, fim?);
    }
    let unlearning_fim_s = seconds(t.elapsed());

    let t = Instant::now();
    let order: Vec<&NodeId> = ug.subgraph.topo_order();
    let jobs: Vec<Result<NodeJob>> = pool.install(|| {
        order
            .par_iter()
            .map(|&id| {
                let model = model_of(umig, id)?;
                let t = Instant::now();
                let cached = umig
                    .node(id)?
                    .model_fim
                    .as_ref()
                    .filter(|_| !request.recompute_model_fims);
                let (owned, source) = match cached {
                    Some(_) => (None, FimSource::Cached),
                    None => {
                        let (data, origin) = catalog.node_data(umig, id)?;
                        let source = match origin {
                            DataOrigin::Own => FimSource::OwnData,
                            DataOrigin::ParentUnion => FimSource::ParentUnion,
                        };
                        (Some(compute_fim(model, &data)?), source)
                    }
                };
                let model_fim = cached.or(owned.as_ref()).expect("one of the two is set");
                let model_fim_s = seconds(t.elapsed());

                let t = Instant::now();
                let reach = ug.reachable_discovery(id)?;
                let merged = merge_fims(reach.iter().map(|d| &unlearning_fims[d]))?;
                let merge_s = seconds(t.elapsed());

                let t = Instant::now();
                let outcome = dampen(model, model_fim, &merged, &request.dampen)?;
                let dampen_s = seconds(t.elapsed());
                Ok(NodeJob {
                    id: id.clone(),
                    outcome,
                    source,
                    model_fim_s,
                    merge_s,
                    dampen_s,
                    finished_s: seconds(start.elapsed()),
                })
            })
            .collect()
    });
    let update_s = seconds(t.elapsed());

    let mut updated = umig.clone();
    let mut passes: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut phases = PhaseTimes {
        discovery_s,
        unlearning_fim_s,
        update_s,
        ..PhaseTimes::default()
    };
    let mut done = Vec::with_capacity(jobs.len());
    for job in jobs {
        let job = job?;
        *passes.entry(job.id.clone()).or_default() += 1;
        updated.set_model_fim(&job.id, None)?;
        updated.set_model(&job.id, job.outcome.model.clone())?;
        phases.model_fim_s += job.model_fim_s;
        phases.merge_s += job.merge_s;
        phases.dampen_s += job.dampen_s;
        done.push(job);
    }
    phases.total_s = seconds(start.elapsed());
    if let Some((id, n)) = passes.iter().find(|(_, &n)| n != 1) {
        return Err(Error::Invariant(format!("node {id} was dampened {n} times")));
    }

    let acc = evaluate_nodes(&updated, &request.c_f, catalog, order.iter().copied())?;
    let nodes = done
        .into_iter()
        .map(|job| NodeReport {
            metrics: NodeMetrics {
                accuracy: acc[&job.id],
                unlearn_time_s: job.model_fim_s + job.merge_s + job.dampen_s,
                cumulative_time_s: job.finished_s,
                triggered_param_count: job.outcome.triggered.len(),
                dampen_passes: passes[&job.id],
                model_fim_source: Some(job.source),
            },
            triggered: job.outcome.triggered,
            id: job.id,
        })
        .collect();
    let report = UnlearnReport {
        method: Method::Fiun,
        c_f: request.c_f.clone(),
        discovery: discovery.into_iter().collect(),
        nodes,
        phases,
    };
    Ok((updated, report))
}
