//! The model inheritance graph: model states as nodes, parameter or task
//! inheritance as directed parent-to-child edges.

mod discovery;
mod file;
mod topology;

pub use discovery::{find_discovery_nodes, unlearning_subgraph, DiscoveryMode, UnlearningGraph};
pub use file::{load_graph, save_graph, GraphEdgeEntry, GraphFile, GraphNodeEntry};
pub use topology::{gen_topology, Topology};

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::LabelSet;
use crate::fim::DiagonalFim;
use crate::model::LinearSoftmaxModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// How a node obtains its parameters during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    /// Starts from its parents' mean (or zeros) and trains on its dataset.
    #[default]
    Trainer,
    /// Takes the unweighted mean of its parents; trains further only when it
    /// has a dataset of its own.
    Aggregator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelNode {
    pub id: NodeId,
    pub role: NodeRole,
    pub model: Option<LinearSoftmaxModel>,
    /// Labels present in the node's training data.
    pub train_labels: LabelSet,
    pub dataset_ref: Option<String>,
    /// Cached model Fisher over the node's training data.
    pub model_fim: Option<DiagonalFim>,
}

impl ModelNode {
    pub fn new(id: impl Into<NodeId>, role: NodeRole) -> Self {
        Self {
            id: id.into(),
            role,
            model: None,
            train_labels: LabelSet::default(),
            dataset_ref: None,
            model_fim: None,
        }
    }

    pub fn with_labels(mut self, labels: LabelSet) -> Self {
        self.train_labels = labels;
        self
    }

    pub fn with_dataset(mut self, dataset_ref: impl Into<String>) -> Self {
        self.dataset_ref = Some(dataset_ref.into());
        self
    }

    pub fn with_model(mut self, model: LinearSoftmaxModel) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_fim(mut self, fim: DiagonalFim) -> Self {
        self.model_fim = Some(fim);
        self
    }

    fn check(&self) -> Result<()> {
        if let (Some(m), Some(f)) = (&self.model, &self.model_fim) {
            if m.num_params() != f.len() {
                return Err(Error::Invariant(format!(
                    "node {}: model has {} parameters but its Fisher has {}",
                    self.id,
                    m.num_params(),
                    f.len()
                )));
            }
        }
        if let Some(m) = &self.model {
            self.train_labels.check_within(m.num_classes())?;
        }
        Ok(())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// A DAG of model nodes. Nodes keep their insertion order, which fixes every
/// traversal order. Each mutation is validated, so a `Umig` is always acyclic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Umig {
    nodes: Vec<ModelNode>,
    index: HashMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// Optional edge weights, carried as metadata only.
    weights: HashMap<(usize, usize), f64>,
}

impl Umig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, node: ModelNode) -> Result<()> {
        if self.index.contains_key(&node.id) {
            return Err(Error::param(format!("duplicate node id {}", node.id)));
        }
        node.check()?;
        self.index.insert(node.id.clone(), self.nodes.len());
        self.nodes.push(node);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        Ok(())
    }

    /// Adds `parent -> child`, rejecting unknown endpoints, duplicates, and
    /// edges that would close a cycle.
    pub fn add_edge(&mut self, parent: &NodeId, child: &NodeId, weight: Option<f64>) -> Result<()> {
        let p = self.idx(parent)?;
        let c = self.idx(child)?;
        if self.children[p].contains(&c) {
            return Err(Error::param(format!("duplicate edge {parent} -> {child}")));
        }
        if p == c || self.reaches(c, p) {
            let mut cycle: Vec<String> = self
                .path(c, p)
                .into_iter()
                .map(|i| self.nodes[i].id.to_string())
                .collect();
            cycle.push(child.to_string());
            return Err(Error::Cycle(cycle));
        }
        self.children[p].push(c);
        self.parents[c].push(p);
        if let Some(w) = weight {
            self.weights.insert((p, c), w);
        }
        Ok(())
    }

    fn idx(&self, id: &NodeId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::param(format!("unknown node {id}")))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Result<&ModelNode> {
        Ok(&self.nodes[self.idx(id)?])
    }

    /// Nodes in insertion order.
    pub fn nodes(&self) -> impl Iterator<Item = &ModelNode> {
        self.nodes.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().map(|n| &n.id)
    }

    /// `(parent, child, weight)` triples grouped by parent in insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId, Option<f64>)> + '_ {
        self.children.iter().enumerate().flat_map(move |(p, cs)| {
            cs.iter()
                .map(move |&c| (&self.nodes[p].id, &self.nodes[c].id, self.weights.get(&(p, c)).copied()))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn parents(&self, id: &NodeId) -> Result<Vec<&NodeId>> {
        let i = self.idx(id)?;
        Ok(self.parents[i].iter().map(|&p| &self.nodes[p].id).collect())
    }

    pub fn children(&self, id: &NodeId) -> Result<Vec<&NodeId>> {
        let i = self.idx(id)?;
        Ok(self.children[i].iter().map(|&c| &self.nodes[c].id).collect())
    }

    /// Nodes without parents.
    pub fn roots(&self) -> Vec<&NodeId> {
        (0..self.len())
            .filter(|&i| self.parents[i].is_empty())
            .map(|i| &self.nodes[i].id)
            .collect()
    }

    pub fn set_model(&mut self, id: &NodeId, model: LinearSoftmaxModel) -> Result<()> {
        let i = self.idx(id)?;
        let mut node = self.nodes[i].clone();
        node.model = Some(model);
        node.check()?;
        self.nodes[i] = node;
        Ok(())
    }

    pub fn set_model_fim(&mut self, id: &NodeId, fim: Option<DiagonalFim>) -> Result<()> {
        let i = self.idx(id)?;
        let mut node = self.nodes[i].clone();
        node.model_fim = fim;
        node.check()?;
        self.nodes[i] = node;
        Ok(())
    }

    pub fn set_train_labels(&mut self, id: &NodeId, labels: LabelSet) -> Result<()> {
        let i = self.idx(id)?;
        let mut node = self.nodes[i].clone();
        node.train_labels = labels;
        node.check()?;
        self.nodes[i] = node;
        Ok(())
    }

    pub fn set_dataset_ref(&mut self, id: &NodeId, dataset_ref: Option<String>) -> Result<()> {
        let i = self.idx(id)?;
        self.nodes[i].dataset_ref = dataset_ref;
        Ok(())
    }

    /// Breadth-first topological order (Kahn): roots first in insertion
    /// order, and every node after all of its parents.
    pub fn topo_order(&self) -> Vec<&NodeId> {
        self.topo_indices().into_iter().map(|i| &self.nodes[i].id).collect()
    }

    fn topo_indices(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &c in &self.children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        order
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        !self.path(from, to).is_empty()
    }

    /// Some path `from -> ... -> to` (inclusive), or empty.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut prev = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::from([from]);
        prev[from] = from;
        while let Some(i) = queue.pop_front() {
            if i == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return path;
            }
            for &c in &self.children[i] {
                if prev[c] == usize::MAX {
                    prev[c] = i;
                    queue.push_back(c);
                }
            }
        }
        Vec::new()
    }

    /// Proper descendants of `id`.
    pub fn descendants(&self, id: &NodeId) -> Result<BTreeSet<NodeId>> {
        let start = self.idx(id)?;
        Ok(self
            .closure(&[start], &self.children)
            .into_iter()
            .filter(|&i| i != start)
            .map(|i| self.nodes[i].id.clone())
            .collect())
    }

    /// Proper ancestors of `id`.
    pub fn ancestors(&self, id: &NodeId) -> Result<BTreeSet<NodeId>> {
        let start = self.idx(id)?;
        Ok(self
            .closure(&[start], &self.parents)
            .into_iter()
            .filter(|&i| i != start)
            .map(|i| self.nodes[i].id.clone())
            .collect())
    }

    fn closure(&self, starts: &[usize], adj: &[Vec<usize>]) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = starts.to_vec();
        for &s in starts {
            seen[s] = true;
        }
        while let Some(i) = stack.pop() {
            for &n in &adj[i] {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        (0..self.len()).filter(|&i| seen[i]).collect()
    }

    /// The subgraph on `keep` with all edges between kept nodes. Node order
    /// follows `self`.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> Result<Umig> {
        for id in keep {
            self.idx(id)?;
        }
        let mut sub = Umig::new();
        for node in self.nodes.iter().filter(|n| keep.contains(&n.id)) {
            sub.add_node(node.clone())?;
        }
        for (p, c, w) in self.edges() {
            if keep.contains(p) && keep.contains(c) {
                sub.add_edge(p, c, w)?;
            }
        }
        Ok(sub)
    }

    /// Always `Ok` for a constructed graph; see [`find_cycle`] for raw edge lists.
    pub fn validate_acyclic(&self) -> std::result::Result<(), Vec<NodeId>> {
        let edges: Vec<(NodeId, NodeId)> = self.edges().map(|(p, c, _)| (p.clone(), c.clone())).collect();
        let ids: Vec<NodeId> = self.ids().cloned().collect();
        match find_cycle(&ids, &edges) {
            Some(c) => Err(c),
            None => Ok(()),
        }
    }
}

/// A cycle `[a, b, ..., a]` in the directed graph `(ids, edges)`, or `None`
/// when it is acyclic. Edges to unknown ids are ignored.
pub fn find_cycle(ids: &[NodeId], edges: &[(NodeId, NodeId)]) -> Option<Vec<NodeId>> {
    let index: HashMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut adj = vec![Vec::new(); ids.len()];
    for (p, c) in edges {
        if let (Some(&p), Some(&c)) = (index.get(p), index.get(c)) {
            adj[p].push(c);
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; ids.len()];
    for root in 0..ids.len() {
        if mark[root] != Mark::New {
            continue;
        }
        // Iterative DFS; `stack` holds the open path with each node's next child cursor.
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Open;
        while let Some(&mut (node, ref mut cursor)) = stack.last_mut() {
            if let Some(&next) = adj[node].get(*cursor) {
                *cursor += 1;
                match mark[next] {
                    Mark::Open => {
                        let start = stack
                            .iter()
                            .position(|&(n, _)| n == next)
                            .expect("open node is on the path");
                        let mut cycle: Vec<NodeId> = stack[start..].iter().map(|&(n, _)| ids[n].clone()).collect();
                        cycle.push(ids[next].clone());
                        return Some(cycle);
                    }
                    Mark::New => {
                        mark[next] = Mark::Open;
                        stack.push((next, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}
