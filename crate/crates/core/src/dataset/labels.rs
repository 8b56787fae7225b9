use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// A class index.
pub type Label = u32;

/// An ordered set of unique class indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(BTreeSet<Label>);

impl LabelSet {
    pub fn contains(&self, label: Label) -> bool {
        self.0.contains(&label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        self.0.union(&other.0).copied().collect()
    }

    pub fn intersection(&self, other: &LabelSet) -> LabelSet {
        self.0.intersection(&other.0).copied().collect()
    }

    pub fn difference(&self, other: &LabelSet) -> LabelSet {
        self.0.difference(&other.0).copied().collect()
    }

    pub fn intersects(&self, other: &LabelSet) -> bool {
        // Iterate the smaller side.
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().any(|l| large.contains(l))
    }

    /// `{0, 1, ..., k - 1}`.
    pub fn range(k: usize) -> LabelSet {
        (0..k as Label).collect()
    }

    pub fn check_within(&self, num_classes: usize) -> Result<()> {
        match self.0.iter().next_back() {
            Some(&max) if max as usize >= num_classes => {
                Err(Error::param(format!("label {max} outside [0, {num_classes})")))
            }
            _ => Ok(()),
        }
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[Label; N]> for LabelSet {
    fn from(labels: [Label; N]) -> Self {
        labels.into_iter().collect()
    }
}

/// Comma-separated, ascending.
impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<Label>()
                    .map_err(|_| Error::param(format!("`{t}` is not a class label")))
            })
            .collect()
    }
}

/// Builds `num_nodes` label sets of `per_node` labels each, drawn from
/// `[0, total_classes)`. All sets share a core of `ceil(overlap_fraction *
/// per_node)` labels; the remaining labels of each set appear in no other set.
pub fn build_overlap_label_sets(
    total_classes: usize,
    per_node: usize,
    num_nodes: usize,
    overlap_fraction: f64,
    seed: u64,
) -> Result<Vec<LabelSet>> {
    if !(0.0..=1.0).contains(&overlap_fraction) {
        return Err(Error::param(format!(
            "overlap fraction {overlap_fraction} outside [0, 1]"
        )));
    }
    if per_node == 0 || num_nodes == 0 {
        return Err(Error::param("per_node and num_nodes must be >= 1"));
    }
    let core = core_size(per_node, overlap_fraction);
    let private = per_node - core;
    let needed = core + num_nodes * private;
    if needed > total_classes {
        return Err(Error::param(format!(
            "{num_nodes} sets of {per_node} labels with a shared core of {core} need \
             {needed} classes, only {total_classes} available"
        )));
    }
    let mut pool: Vec<Label> = (0..total_classes as Label).collect();
    pool.shuffle(&mut seed::rng(seed));
    let (shared, rest) = pool.split_at(core);
    Ok((0..num_nodes)
        .map(|i| {
            shared
                .iter()
                .chain(&rest[i * private..(i + 1) * private])
                .copied()
                .collect()
        })
        .collect())
}

/// `ceil(fraction * per_node)`, robust to products such as `0.6 * 5` that land
/// a hair above an integer in binary floating point.
pub(crate) fn core_size(per_node: usize, fraction: f64) -> usize {
    let exact = fraction * per_node as f64;
    let rounded = exact.round();
    let core = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        exact.ceil()
    };
    (core as usize).min(per_node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        let s: LabelSet = "3, 1,2,1".parse().unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(s.to_string(), "1,2,3");
        assert!("1,x".parse::<LabelSet>().is_err());
        assert!("".parse::<LabelSet>().unwrap().is_empty());
    }

    #[test]
    fn core_rounds_up() {
        assert_eq!(core_size(5, 0.6), 3);
        assert_eq!(core_size(3, 0.6), 2);
        assert_eq!(core_size(3, 0.2), 1);
        assert_eq!(core_size(4, 0.0), 0);
        assert_eq!(core_size(4, 1.0), 4);
        assert_eq!(core_size(10, 0.7), 7);
    }

    #[test]
    fn half_overlap_shape() {
        // Two sets of four sharing two labels, like {1,2,3,4} and {2,3,5,6}.
        let sets = build_overlap_label_sets(7, 4, 2, 0.5, 11).unwrap();
        assert_eq!(sets[0].len(), 4);
        assert_eq!(sets[1].len(), 4);
        assert_eq!(sets[0].intersection(&sets[1]).len(), 2);
        assert_eq!(sets[0].union(&sets[1]).len(), 6);
    }

    #[test]
    fn extreme_fractions() {
        let disjoint = build_overlap_label_sets(12, 3, 4, 0.0, 5).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(!disjoint[i].intersects(&disjoint[j]));
            }
        }
        let same = build_overlap_label_sets(12, 3, 4, 1.0, 5).unwrap();
        assert!(same.iter().all(|s| *s == same[0]));
    }

    #[test]
    fn infeasible_and_invalid() {
        assert!(build_overlap_label_sets(5, 3, 2, 0.0, 0).is_err());
        assert!(build_overlap_label_sets(10, 3, 2, 1.5, 0).is_err());
        assert!(build_overlap_label_sets(10, 0, 2, 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn overlap_structure(per_node in 1usize..6, num_nodes in 2usize..5, frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let core = core_size(per_node, frac);
            let total = core + num_nodes * (per_node - core) + 2;
            let sets = build_overlap_label_sets(total, per_node, num_nodes, frac, seed).unwrap();
            prop_assert_eq!(sets.len(), num_nodes);
            let all = sets.iter().skip(1).fold(sets[0].clone(), |acc, s| acc.intersection(s));
            prop_assert_eq!(all.len(), core);
            for s in &sets {
                prop_assert_eq!(s.len(), per_node);
                s.check_within(total).unwrap();
            }
            for i in 0..num_nodes {
                for j in i + 1..num_nodes {
                    prop_assert_eq!(sets[i].intersection(&sets[j]), all.clone());
                }
            }
        }
    }
}
