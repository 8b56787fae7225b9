use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelSet;
use crate::seed;
use crate::umig::{ModelNode, NodeId, NodeRole, Umig};
use crate::{Error, Result};

/// Graph families that can be generated. Client-style nodes read a shard of
/// the base dataset; chain nodes read a growing class range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// Per round, `clients` trainers feed one aggregate that seeds the next round.
    FlStar { clients: usize, rounds: usize },
    /// Clients feed `groups` intermediate aggregates, which feed a global one.
    FlMultilayer {
        clients: usize,
        groups: usize,
        rounds: usize,
    },
    /// Each client of round `r > 0` inherits from `approvals` seeded picks among round `r - 1`.
    DagFl {
        clients: usize,
        rounds: usize,
        #[serde(default = "default_approvals")]
        approvals: usize,
    },
    /// Parallel sub-tasks synchronised into one model per iteration.
    Ddpl { subtasks: usize, iterations: usize },
    IlChain {
        steps: usize,
        base_labels: usize,
        labels_per_step: usize,
    },
    TlChain {
        steps: usize,
        base_labels: usize,
        labels_per_step: usize,
    },
    /// Complete binary tree; node `i` (breadth-first) reads shard `i mod shards`.
    BinaryTree {
        depth: usize,
        #[serde(default = "default_tree_shards")]
        shards: usize,
    },
}

fn default_approvals() -> usize {
    2
}

fn default_tree_shards() -> usize {
    5
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::param(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn shard_ref(i: usize, n: usize) -> String {
    format!("shard:{i}of{n}")
}

/// Builds an untrained skeleton. Node labels are the nominal label sets of
/// their datasets; training replaces them with the labels actually present.
pub fn gen_topology(topology: &Topology, num_classes: usize, seed: u64) -> Result<Umig> {
    positive("num_classes", num_classes)?;
    let all = LabelSet::range(num_classes);
    let mut g = Umig::new();

    match *topology {
        Topology::FlStar { clients, rounds } => {
            star(&mut g, &all, clients, rounds, "c", "agg")?;
        }
        Topology::Ddpl { subtasks, iterations } => {
            star(&mut g, &all, subtasks, iterations, "task", "sync")?;
        }
        Topology::FlMultilayer {
            clients,
            groups,
            rounds,
        } => {
            positive("clients", clients)?;
            positive("groups", groups)?;
            positive("rounds", rounds)?;
            if groups > clients {
                return Err(Error::param("groups must not exceed clients"));
            }
            for r in 0..rounds {
                for j in 0..groups {
                    add(&mut g, format!("r{r}_g{j}"), NodeRole::Aggregator, &all, None)?;
                }
                add(&mut g, format!("r{r}_agg"), NodeRole::Aggregator, &all, None)?;
                for i in 0..clients {
                    let c = format!("r{r}_c{i}");
                    add(&mut g, c.clone(), NodeRole::Trainer, &all, Some(shard_ref(i, clients)))?;
                    if r > 0 {
                        link(&mut g, &format!("r{}_agg", r - 1), &c)?;
                    }
                    link(&mut g, &c, &format!("r{r}_g{}", i * groups / clients))?;
                }
                for j in 0..groups {
                    link(&mut g, &format!("r{r}_g{j}"), &format!("r{r}_agg"))?;
                }
            }
        }
        Topology::DagFl {
            clients,
            rounds,
            approvals,
        } => {
            positive("clients", clients)?;
            positive("rounds", rounds)?;
            positive("approvals", approvals)?;
            let mut rng = seed::rng(seed::derive(seed, "topology/dag_fl"));
            let approvals = approvals.min(clients);
            for r in 0..rounds {
                for i in 0..clients {
                    let c = format!("r{r}_c{i}");
                    add(&mut g, c.clone(), NodeRole::Trainer, &all, Some(shard_ref(i, clients)))?;
                    if r > 0 {
                        let mut picks = index::sample(&mut rng, clients, approvals).into_vec();
                        picks.sort_unstable();
                        for p in picks {
                            link(&mut g, &format!("r{}_c{p}", r - 1), &c)?;
                        }
                    }
                }
            }
        }
        Topology::IlChain {
            steps,
            base_labels,
            labels_per_step,
        } => {
            chain(&mut g, "il", num_classes, steps, base_labels, labels_per_step)?;
        }
        Topology::TlChain {
            steps,
            base_labels,
            labels_per_step,
        } => {
            chain(&mut g, "tl", num_classes, steps, base_labels, labels_per_step)?;
        }
        Topology::BinaryTree { depth, shards } => {
            positive("depth", depth)?;
            positive("shards", shards)?;
            if depth > 20 {
                return Err(Error::param("depth must be at most 20"));
            }
            let count = (1usize << depth) - 1;
            for i in 0..count {
                add(
                    &mut g,
                    format!("n{i}"),
                    NodeRole::Trainer,
                    &all,
                    Some(shard_ref(i % shards, shards)),
                )?;
                if i > 0 {
                    link(&mut g, &format!("n{}", (i - 1) / 2), &format!("n{i}"))?;
                }
            }
        }
    }
    Ok(g)
}

fn add(g: &mut Umig, id: String, role: NodeRole, labels: &LabelSet, data: Option<String>) -> Result<()> {
    let mut node = ModelNode::new(id, role).with_labels(labels.clone());
    node.dataset_ref = data;
    g.add_node(node)
}

fn link(g: &mut Umig, parent: &str, child: &str) -> Result<()> {
    g.add_edge(&NodeId::new(parent), &NodeId::new(child), None)
}

fn star(g: &mut Umig, all: &LabelSet, workers: usize, rounds: usize, worker: &str, hub: &str) -> Result<()> {
    positive("clients", workers)?;
    positive("rounds", rounds)?;
    for r in 0..rounds {
        let agg = format!("r{r}_{hub}");
        add(g, agg.clone(), NodeRole::Aggregator, all, None)?;
        for i in 0..workers {
            let c = format!("r{r}_{worker}{i}");
            add(g, c.clone(), NodeRole::Trainer, all, Some(shard_ref(i, workers)))?;
            if r > 0 {
                link(g, &format!("r{}_{hub}", r - 1), &c)?;
            }
            link(g, &c, &agg)?;
        }
    }
    Ok(())
}

fn chain(g: &mut Umig, prefix: &str, num_classes: usize, steps: usize, base: usize, per_step: usize) -> Result<()> {
    positive("steps", steps)?;
    positive("base_labels", base)?;
    let last = base + (steps - 1) * per_step;
    if last > num_classes {
        return Err(Error::param(format!(
            "chain needs {last} labels but only {num_classes} classes exist"
        )));
    }
    for s in 0..steps {
        let n = base + s * per_step;
        let id = format!("{prefix}{s}");
        add(
            g,
            id.clone(),
            NodeRole::Trainer,
            &LabelSet::range(n),
            Some(format!("classes:0..{n}")),
        )?;
        if s > 0 {
            link(g, &format!("{prefix}{}", s - 1), &id)?;
        }
    }
    Ok(())
}
