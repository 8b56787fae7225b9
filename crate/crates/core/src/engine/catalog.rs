use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use crate::dataset::{shard, LabelSet, LabeledDataset};
use crate::seed;
use crate::umig::{NodeId, Umig};
use crate::{Error, Result};

/// Where a node's data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataOrigin {
    /// The node's own `dataset_ref`.
    Own,
    /// The union of the nearest data-bearing ancestors' datasets.
    ParentUnion,
}

/// Resolves dataset references against one base dataset.
///
/// A reference is a `/`-separated pipeline applied left to right:
/// `all`, `shard:IofN` (seeded partition into `N` parts, part `I`),
/// `classes:LO..HI` (labels in the half-open range), `labels:L,...` and
/// `without:L,...`. For example `shard:2of5/without:3` is shard 2 of 5 with
/// label 3 removed. Resolved datasets are cached by reference.
#[derive(Debug)]
pub struct DataCatalog {
    base: Arc<LabeledDataset>,
    seed: u64,
    cache: Mutex<HashMap<String, Arc<LabeledDataset>>>,
}

impl DataCatalog {
    pub fn new(base: LabeledDataset, seed: u64) -> Self {
        Self {
            base: Arc::new(base),
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn base(&self) -> &LabeledDataset {
        &self.base
    }

    pub fn num_classes(&self) -> usize {
        self.base.num_classes()
    }

    /// Registers an explicit dataset under `reference`, overriding the pipeline.
    pub fn insert(&self, reference: impl Into<String>, ds: LabeledDataset) -> Result<()> {
        if ds.num_classes() != self.base.num_classes() || (!ds.is_empty() && ds.dim() != self.base.dim()) {
            return Err(Error::param("registered dataset does not match the base shape"));
        }
        self.lock().insert(reference.into(), Arc::new(ds));
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<LabeledDataset>>> {
        self.cache.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn resolve(&self, reference: &str) -> Result<Arc<LabeledDataset>> {
        if let Some(ds) = self.lock().get(reference) {
            return Ok(Arc::clone(ds));
        }
        let (parent, op) = match reference.rsplit_once('/') {
            Some((p, op)) => (Some(p), op),
            None => (None, reference),
        };
        let input = match parent {
            Some(p) => self.resolve(p)?,
            None => Arc::clone(&self.base),
        };
        let out = Arc::new(self.apply(&input, op.trim(), reference)?);
        self.lock().insert(reference.to_owned(), Arc::clone(&out));
        Ok(out)
    }

    fn apply(&self, ds: &LabeledDataset, op: &str, full: &str) -> Result<LabeledDataset> {
        let bad = |why: &str| Error::config(format!("dataset reference {full:?}: {why}"));
        if op == "all" {
            return Ok(ds.clone());
        }
        let (name, arg) = op.split_once(':').ok_or_else(|| bad(&format!("unknown step {op:?}")))?;
        match name {
            "shard" => {
                let (i, n) = arg.split_once("of").ok_or_else(|| bad("expected shard:IofN"))?;
                let i: usize = i.parse().map_err(|_| bad("bad shard index"))?;
                let n: usize = n.parse().map_err(|_| bad("bad shard count"))?;
                if i >= n {
                    return Err(bad("shard index out of range"));
                }
                let parts = shard(ds, n, seed::derive(self.seed, &format!("shard/{n}")))?;
                Ok(parts.into_iter().nth(i).expect("index checked"))
            }
            "classes" => {
                let (lo, hi) = arg.split_once("..").ok_or_else(|| bad("expected classes:LO..HI"))?;
                let lo: u32 = lo.parse().map_err(|_| bad("bad class bound"))?;
                let hi: u32 = hi.parse().map_err(|_| bad("bad class bound"))?;
                Ok(ds.filter_labels(|l| (lo..hi).contains(&l)))
            }
            "labels" | "without" => {
                let set: LabelSet = arg.parse().map_err(|_| bad("bad label list"))?;
                set.check_within(ds.num_classes())?;
                let keep = name == "labels";
                Ok(ds.filter_labels(|l| set.contains(l) == keep))
            }
            _ => Err(bad(&format!("unknown step {name:?}"))),
        }
    }

    /// A node's training data: its own reference, or else the union of the
    /// datasets of its nearest data-bearing ancestors (each counted once).
    pub fn node_data(&self, umig: &Umig, id: &NodeId) -> Result<(Arc<LabeledDataset>, DataOrigin)> {
        let node = umig.node(id)?;
        if let Some(r) = &node.dataset_ref {
            return Ok((self.resolve(r)?, DataOrigin::Own));
        }
        let mut sources = BTreeSet::new();
        let mut stack: Vec<&NodeId> = umig.parents(id)?;
        let mut seen: BTreeSet<&NodeId> = stack.iter().copied().collect();
        while let Some(p) = stack.pop() {
            if umig.node(p)?.dataset_ref.is_some() {
                sources.insert(p.clone());
            } else {
                for q in umig.parents(p)? {
                    if seen.insert(q) {
                        stack.push(q);
                    }
                }
            }
        }
        if sources.is_empty() {
            return Err(Error::config(format!(
                "node {id} has no dataset and no data-bearing ancestor"
            )));
        }
        // Concatenate in graph order so the union is reproducible.
        let mut parts = Vec::with_capacity(sources.len());
        for n in umig.ids().filter(|n| sources.contains(*n)) {
            let r = umig.node(n)?.dataset_ref.as_deref().expect("source has a reference");
            parts.push(self.resolve(r)?);
        }
        let union = LabeledDataset::concat(parts.iter().map(|p| p.as_ref()))?;
        Ok((Arc::new(union), DataOrigin::ParentUnion))
    }
}

/// Gives the `i`-th root its own forget set: each root additionally drops
/// the labels that belong only to the other roots' sets. Returns the union
/// of the sets, which is the request's forget set.
pub fn assign_forget_sets(umig: &mut Umig, sets: &[LabelSet]) -> Result<LabelSet> {
    let roots: Vec<NodeId> = umig.roots().into_iter().cloned().collect();
    if roots.len() != sets.len() {
        return Err(Error::config(format!(
            "{} forget sets for {} root nodes",
            sets.len(),
            roots.len()
        )));
    }
    let union = sets.iter().fold(LabelSet::default(), |acc, s| acc.union(s));
    for (root, own) in roots.iter().zip(sets) {
        let foreign = union.difference(own);
        if foreign.is_empty() {
            continue;
        }
        let node = umig.node(root)?;
        let base = node
            .dataset_ref
            .clone()
            .ok_or_else(|| Error::config(format!("root {root} has no dataset")))?;
        let labels = node.train_labels.difference(&foreign);
        umig.set_dataset_ref(root, Some(format!("{base}/without:{foreign}")))?;
        umig.set_train_labels(root, labels)?;
    }
    Ok(union)
}
