use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataCatalog;
use crate::dataset::{split_by_labels, LabelSet};
use crate::io::{read_file, write_file};
use crate::model::accuracy;
use crate::umig::{NodeId, Umig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fiun,
    Retrain,
    Finetune,
    GradientAscent,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fiun => "fiun",
            Method::Retrain => "retrain",
            Method::Finetune => "finetune",
            Method::GradientAscent => "gradient_ascent",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fiun" => Ok(Method::Fiun),
            "retrain" => Ok(Method::Retrain),
            "finetune" => Ok(Method::Finetune),
            "ga" | "gradient_ascent" => Ok(Method::GradientAscent),
            _ => Err(Error::param(format!(
                "unknown method {s:?} (expected fiun, retrain, finetune or ga)"
            ))),
        }
    }
}

/// Accuracy on the forgotten and retained parts of a node's training data.
/// An empty part scores 0 and sets its flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeAccuracy {
    pub ad_f: f64,
    pub ad_r: f64,
    pub delta_acc: f64,
    pub ad_f_empty: bool,
    pub ad_r_empty: bool,
}

impl NodeAccuracy {
    pub fn new(ad_f: f64, ad_r: f64) -> Self {
        Self {
            ad_f,
            ad_r,
            delta_acc: ad_r - ad_f,
            ad_f_empty: false,
            ad_r_empty: false,
        }
    }
}

/// Where the model Fisher used for dampening came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FimSource {
    Cached,
    OwnData,
    ParentUnion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    #[serde(flatten)]
    pub accuracy: NodeAccuracy,
    /// Seconds spent on this node's own update.
    pub unlearn_time_s: f64,
    /// Seconds from the start of the request until this node was final.
    pub cumulative_time_s: f64,
    pub triggered_param_count: usize,
    pub dampen_passes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_fim_source: Option<FimSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: NodeId,
    pub metrics: NodeMetrics,
    /// Flat indices of dampened parameters, ascending.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triggered: Vec<usize>,
}

/// Wall-clock seconds per phase. The per-node phases of FIUn run in parallel,
/// so `model_fim_s`, `merge_s` and `dampen_s` are sums over nodes while
/// `update_s` is the wall time of the whole parallel section.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub discovery_s: f64,
    pub unlearning_fim_s: f64,
    pub model_fim_s: f64,
    pub merge_s: f64,
    pub dampen_s: f64,
    pub update_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnReport {
    pub method: Method,
    pub c_f: LabelSet,
    pub discovery: Vec<NodeId>,
    /// Unlearning-graph nodes in topological order, each exactly once.
    pub nodes: Vec<NodeReport>,
    pub phases: PhaseTimes,
}

impl UnlearnReport {
    pub fn node(&self, id: &NodeId) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn max_cumulative_time(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.metrics.cumulative_time_s)
            .fold(0.0, f64::max)
    }

    /// A copy with every timing field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.phases = PhaseTimes::default();
        for n in &mut out.nodes {
            n.metrics.unlearn_time_s = 0.0;
            n.metrics.cumulative_time_s = 0.0;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.line(), e.to_string()))
    }

    /// One row per node: `method,node,num_cf,ad_f,ad_r,delta_acc,time_s`,
    /// where `time_s` is the cumulative time.
    pub fn to_csv(&self, header: bool) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Invariant(format!("csv encoding failed: {e}"));
        if header {
            w.write_record(CSV_HEADER).map_err(csv_err)?;
        }
        for n in &self.nodes {
            let m = &n.metrics;
            w.write_record([
                self.method.as_str().to_owned(),
                n.id.to_string(),
                self.c_f.len().to_string(),
                format!("{:.4}", m.accuracy.ad_f),
                format!("{:.4}", m.accuracy.ad_r),
                format!("{:.4}", m.accuracy.delta_acc),
                format!("{:.6}", m.cumulative_time_s),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv(true)?.as_bytes())
    }
}

pub const CSV_HEADER: [&str; 7] = ["method", "node", "num_cf", "ad_f", "ad_r", "delta_acc", "time_s"];

/// AD_f, AD_r and their difference for each listed node, on the node's
/// training data.
pub fn evaluate_nodes<'a>(
    umig: &Umig,
    c_f: &LabelSet,
    catalog: &DataCatalog,
    ids: impl IntoIterator<Item = &'a NodeId>,
) -> Result<BTreeMap<NodeId, NodeAccuracy>> {
    let mut out = BTreeMap::new();
    for id in ids {
        let model = umig
            .node(id)?
            .model
            .as_ref()
            .ok_or_else(|| Error::config(format!("node {id} has no model to evaluate")))?;
        let (data, _) = catalog.node_data(umig, id)?;
        let (forget, retain) = split_by_labels(&data, c_f)?;
        let f = accuracy(model, &forget, None)?;
        let r = accuracy(model, &retain, None)?;
        out.insert(
            id.clone(),
            NodeAccuracy {
                ad_f_empty: f.empty,
                ad_r_empty: r.empty,
                ..NodeAccuracy::new(f.value, r.value)
            },
        );
    }
    Ok(out)
}

/// [`evaluate_nodes`] over every node of the graph.
pub fn evaluate(umig: &Umig, c_f: &LabelSet, catalog: &DataCatalog) -> Result<BTreeMap<NodeId, NodeAccuracy>> {
    evaluate_nodes(umig, c_f, catalog, umig.ids())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speedup {
    Finite(f64),
    /// The faster method took no measurable time.
    Infinite,
}

/// How many times faster `a` finished than `b`: the ratio of `b`'s maximum
/// cumulative time to `a`'s.
pub fn speedup(a: &UnlearnReport, b: &UnlearnReport) -> Result<Speedup> {
    fn ids(r: &UnlearnReport) -> Vec<&NodeId> {
        let mut v: Vec<&NodeId> = r.nodes.iter().map(|n| &n.id).collect();
        v.sort();
        v
    }
    if ids(a) != ids(b) {
        return Err(Error::param("reports cover different node sets"));
    }
    let (ta, tb) = (a.max_cumulative_time(), b.max_cumulative_time());
    Ok(if ta == tb {
        Speedup::Finite(1.0)
    } else if ta == 0.0 {
        Speedup::Infinite
    } else {
        Speedup::Finite(tb / ta)
    })
}
