use std::collections::{BTreeSet, HashMap};

use crate::dataset::{LabelSet, LabeledDataset};
use crate::model::accuracy;
use crate::umig::{NodeId, Umig};
use crate::{Error, Result};

/// How discovery nodes are recognised.
#[derive(Debug, Clone, Default)]
pub enum DiscoveryMode {
    /// A node qualifies when its `train_labels` intersect the forget set.
    #[default]
    Metadata,
    /// A node qualifies when its accuracy on `probe` (rows of the forget
    /// labels) exceeds `threshold`.
    Accuracy {
        threshold: f64,
        probe: Option<LabeledDataset>,
    },
}

/// A node is a discovery node when it qualifies and no proper ancestor
/// qualifies. Qualification is propagated breadth-first from the roots, so
/// the result does not depend on insertion order.
pub fn find_discovery_nodes(umig: &Umig, c_f: &LabelSet, mode: &DiscoveryMode) -> Result<BTreeSet<NodeId>> {
    if c_f.is_empty() {
        return Err(Error::param("forget label set is empty"));
    }
    let qualifies = |id: &NodeId| -> Result<bool> {
        let node = umig.node(id)?;
        match mode {
            DiscoveryMode::Metadata => Ok(node.train_labels.intersects(c_f)),
            DiscoveryMode::Accuracy { threshold, probe } => {
                let probe = probe
                    .as_ref()
                    .ok_or_else(|| Error::param("accuracy discovery needs probe data"))?;
                let model = node
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::config(format!("node {id} has no model to probe")))?;
                let acc = accuracy(model, probe, Some(c_f))?;
                Ok(!acc.empty && acc.value > *threshold)
            }
        }
    };

    // `covered[n]`: n or one of its ancestors qualifies.
    let mut covered: HashMap<&NodeId, bool> = HashMap::with_capacity(umig.len());
    let mut found = BTreeSet::new();
    for id in umig.topo_order() {
        let mut inherited = false;
        for p in umig.parents(id)? {
            inherited |= covered[p];
        }
        let hit = !inherited && qualifies(id)?;
        if hit {
            found.insert(id.clone());
        }
        covered.insert(id, inherited || hit);
    }
    Ok(found)
}

/// The union of the discovery nodes' descendant closures.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlearningGraph {
    pub subgraph: Umig,
    pub discovery_ids: BTreeSet<NodeId>,
}

impl UnlearningGraph {
    pub fn is_empty(&self) -> bool {
        self.subgraph.is_empty()
    }

    /// Discovery nodes that are `id` or one of its ancestors in the subgraph.
    pub fn reachable_discovery(&self, id: &NodeId) -> Result<BTreeSet<NodeId>> {
        let mut set = self.subgraph.ancestors(id)?;
        set.insert(id.clone());
        set.retain(|n| self.discovery_ids.contains(n));
        Ok(set)
    }
}

pub fn unlearning_subgraph(umig: &Umig, discovery: &BTreeSet<NodeId>) -> Result<UnlearningGraph> {
    let mut keep = BTreeSet::new();
    for id in discovery {
        keep.extend(umig.descendants(id)?);
        keep.insert(id.clone());
    }
    Ok(UnlearningGraph {
        subgraph: umig.induced(&keep)?,
        discovery_ids: discovery.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelSet;
    use crate::model::LinearSoftmaxModel;
    use crate::umig::{ModelNode, NodeRole};
    use proptest::prelude::*;

    fn id(s: &str) -> NodeId {
        NodeId::new(s)
    }

    fn graph(nodes: &[(&str, &[u32])], edges: &[(&str, &str)]) -> Umig {
        let mut g = Umig::new();
        for (n, labels) in nodes {
            let labels: LabelSet = labels.iter().copied().collect();
            g.add_node(ModelNode::new(*n, NodeRole::Trainer).with_labels(labels))
                .unwrap();
        }
        for (p, c) in edges {
            g.add_edge(&id(p), &id(c), None).unwrap();
        }
        g
    }

    // Two starting nodes carrying the forget label, their descendants
    // inheriting from one or both.
    fn two_root() -> Umig {
        graph(
            &[
                ("n_s", &[1, 2]),
                ("n_f", &[1, 3]),
                ("n_o", &[4]),
                ("a", &[1, 2, 4]),
                ("b", &[1, 3]),
                ("h", &[1, 2, 3, 4]),
            ],
            &[("n_s", "a"), ("n_o", "a"), ("n_f", "b"), ("a", "h"), ("b", "h")],
        )
    }

    #[test]
    fn two_roots_and_overlap() {
        let g = two_root();
        let c_f: LabelSet = [1].into();
        let d = find_discovery_nodes(&g, &c_f, &DiscoveryMode::Metadata).unwrap();
        assert_eq!(d, [id("n_s"), id("n_f")].into());
        let ug = unlearning_subgraph(&g, &d).unwrap();
        let ids: Vec<&str> = ug.subgraph.ids().map(NodeId::as_str).collect();
        assert_eq!(ids, vec!["n_s", "n_f", "a", "b", "h"]);
        assert_eq!(ug.reachable_discovery(&id("h")).unwrap(), d);
        assert_eq!(ug.reachable_discovery(&id("a")).unwrap(), [id("n_s")].into());
        assert_eq!(ug.reachable_discovery(&id("n_f")).unwrap(), [id("n_f")].into());
        assert!(ug.reachable_discovery(&id("n_o")).is_err());
    }

    #[test]
    fn three_discovery_ancestors() {
        let g = graph(
            &[("w_j", &[0]), ("w_s", &[1]), ("w_f", &[2]), ("w_h", &[0, 1, 2])],
            &[("w_j", "w_h"), ("w_s", "w_h"), ("w_f", "w_h")],
        );
        let c_f: LabelSet = [0, 1, 2].into();
        let d = find_discovery_nodes(&g, &c_f, &DiscoveryMode::Metadata).unwrap();
        let ug = unlearning_subgraph(&g, &d).unwrap();
        assert_eq!(
            ug.reachable_discovery(&id("w_h")).unwrap(),
            [id("w_j"), id("w_s"), id("w_f")].into()
        );
    }

    #[test]
    fn empty_cases() {
        let g = two_root();
        let d = find_discovery_nodes(&g, &[9].into(), &DiscoveryMode::Metadata).unwrap();
        assert!(d.is_empty());
        assert!(unlearning_subgraph(&g, &d).unwrap().is_empty());
        assert!(find_discovery_nodes(&g, &LabelSet::default(), &DiscoveryMode::Metadata).is_err());
        assert!(unlearning_subgraph(&g, &[id("nope")].into()).is_err());
    }

    #[test]
    fn chain_subgraph() {
        let g = graph(&[("g", &[0]), ("a", &[0]), ("b", &[0])], &[("g", "a"), ("a", "b")]);
        let ug = unlearning_subgraph(&g, &[id("g")].into()).unwrap();
        assert_eq!(ug.subgraph.len(), 3);
        assert_eq!(ug.subgraph.edge_count(), 2);
    }

    #[test]
    fn accuracy_mode_needs_probe() {
        let g = two_root();
        let mode = DiscoveryMode::Accuracy {
            threshold: 0.5,
            probe: None,
        };
        assert!(matches!(
            find_discovery_nodes(&g, &[1].into(), &mode),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn accuracy_mode_first_recognising_node() {
        // Class 1 is predicted once the bias favours it.
        let blind = LinearSoftmaxModel::from_parts(2, 1, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let sees = LinearSoftmaxModel::from_parts(2, 1, &[0.0, 0.0], &[0.0, 1.0]).unwrap();
        let mut g = Umig::new();
        for (n, m) in [("r", &blind), ("a", &sees), ("b", &sees)] {
            g.add_node(ModelNode::new(n, NodeRole::Trainer).with_model(m.clone()))
                .unwrap();
        }
        g.add_edge(&id("r"), &id("a"), None).unwrap();
        g.add_edge(&id("a"), &id("b"), None).unwrap();
        let probe = LabeledDataset::new(vec![0.0, 1.0], vec![1, 1], 1, 2).unwrap();
        let mode = DiscoveryMode::Accuracy {
            threshold: 0.5,
            probe: Some(probe),
        };
        assert_eq!(find_discovery_nodes(&g, &[1].into(), &mode).unwrap(), [id("a")].into());
    }

    fn random_dag() -> impl Strategy<Value = (Umig, LabelSet)> {
        (2usize..12).prop_flat_map(|n| {
            let labels = proptest::collection::vec(proptest::collection::btree_set(0u32..6, 0..3), n);
            let edges = proptest::collection::vec((0..n, 0..n), 0..2 * n);
            let c_f = proptest::collection::btree_set(0u32..6, 1..3);
            (labels, edges, c_f).prop_map(move |(labels, edges, c_f)| {
                let mut g = Umig::new();
                for (i, l) in labels.into_iter().enumerate() {
                    g.add_node(ModelNode::new(format!("n{i}"), NodeRole::Trainer).with_labels(l.into_iter().collect()))
                        .unwrap();
                }
                for (a, b) in edges {
                    // Orient forward so the graph stays acyclic.
                    if a < b {
                        let _ = g.add_edge(&id(&format!("n{a}")), &id(&format!("n{b}")), None);
                    }
                }
                (g, c_f.into_iter().collect())
            })
        })
    }

    // Brute-force reachability by repeated edge relaxation.
    fn brute_ancestors(g: &Umig, target: &NodeId) -> BTreeSet<NodeId> {
        let edges: Vec<(NodeId, NodeId)> = g.edges().map(|(p, c, _)| (p.clone(), c.clone())).collect();
        let mut anc: BTreeSet<NodeId> = BTreeSet::new();
        loop {
            let before = anc.len();
            for (p, c) in &edges {
                if c == target || anc.contains(c) {
                    anc.insert(p.clone());
                }
            }
            if anc.len() == before {
                return anc;
            }
        }
    }

    proptest! {
        #[test]
        fn discovery_matches_brute_force((g, c_f) in random_dag()) {
            let found = find_discovery_nodes(&g, &c_f, &DiscoveryMode::Metadata).unwrap();
            let hits = |n: &NodeId| g.node(n).unwrap().train_labels.intersects(&c_f);
            let expected: BTreeSet<NodeId> = g
                .ids()
                .filter(|n| hits(n) && !brute_ancestors(&g, n).iter().any(hits))
                .cloned()
                .collect();
            prop_assert_eq!(&found, &expected);

            let ug = unlearning_subgraph(&g, &found).unwrap();
            let mut closure = BTreeSet::new();
            for n in g.ids() {
                if found.contains(n) || brute_ancestors(&g, n).iter().any(|a| found.contains(a)) {
                    closure.insert(n.clone());
                }
            }
            let sub: BTreeSet<NodeId> = ug.subgraph.ids().cloned().collect();
            prop_assert_eq!(&sub, &closure);
            prop_assert!(ug.subgraph.validate_acyclic().is_ok());

            for n in ug.subgraph.ids() {
                let mut expected = brute_ancestors(&ug.subgraph, n);
                expected.insert(n.clone());
                expected.retain(|a| found.contains(a));
                let reach = ug.reachable_discovery(n).unwrap();
                prop_assert!(!reach.is_empty());
                prop_assert_eq!(reach, expected);
            }
        }
    }
}
