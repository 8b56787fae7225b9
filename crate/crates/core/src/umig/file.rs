use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::LabelSet;
use crate::fim::{load_fim, save_fim};
use crate::io::{read_file, write_file};
use crate::model::{load_checkpoint, save_checkpoint, save_export};
use crate::umig::{find_cycle, ModelNode, NodeId, NodeRole, Umig};
use crate::{Error, Result};

/// On-disk graph document. Artifact paths are relative to the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<GraphNodeEntry>,
    pub edges: Vec<GraphEdgeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphNodeEntry {
    pub id: NodeId,
    #[serde(default)]
    pub role: NodeRole,
    #[serde(default)]
    pub train_labels: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fim: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdgeEntry {
    pub parent: NodeId,
    pub child: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

fn file_stem(id: &NodeId, used: &mut HashSet<String>) -> String {
    let base: String = id
        .as_str()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let mut stem = base.clone();
    let mut k = 1;
    while !used.insert(stem.clone()) {
        stem = format!("{base}_{k}");
        k += 1;
    }
    stem
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes the graph document at `path`, with each model under `models/`
/// (binary checkpoint plus JSON export) and each cached Fisher under `fims/`.
pub fn save_graph(umig: &Umig, path: &Path) -> Result<()> {
    let dir = base_dir(path);
    let mut used = HashSet::new();
    let mut nodes = Vec::with_capacity(umig.len());
    for node in umig.nodes() {
        let stem = file_stem(&node.id, &mut used);
        let mut entry = GraphNodeEntry {
            id: node.id.clone(),
            role: node.role,
            train_labels: node.train_labels.clone(),
            dataset_ref: node.dataset_ref.clone(),
            model: None,
            fim: None,
        };
        if let Some(model) = &node.model {
            let rel = format!("models/{stem}.ckpt");
            save_checkpoint(model, &dir.join(&rel))?;
            save_export(model, &dir.join(format!("models/{stem}.json")))?;
            entry.model = Some(rel);
        }
        if let Some(fim) = &node.model_fim {
            let rel = format!("fims/{stem}.fim");
            save_fim(fim, &dir.join(&rel))?;
            entry.fim = Some(rel);
        }
        nodes.push(entry);
    }
    let edges = umig
        .edges()
        .map(|(p, c, weight)| GraphEdgeEntry {
            parent: p.clone(),
            child: c.clone(),
            weight,
        })
        .collect();
    let mut json = serde_json::to_vec_pretty(&GraphFile { nodes, edges })?;
    json.push(b'\n');
    write_file(path, &json)
}

pub fn load_graph(path: &Path) -> Result<Umig> {
    let bytes = read_file(path)?;
    let doc: GraphFile = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.line(), e.to_string()))?;
    let ids: Vec<NodeId> = doc.nodes.iter().map(|n| n.id.clone()).collect();
    let pairs: Vec<(NodeId, NodeId)> = doc.edges.iter().map(|e| (e.parent.clone(), e.child.clone())).collect();
    if let Some(cycle) = find_cycle(&ids, &pairs) {
        return Err(Error::Cycle(cycle.into_iter().map(|n| n.to_string()).collect()));
    }
    let dir = base_dir(path);
    let mut umig = Umig::new();
    for entry in doc.nodes {
        let mut node = ModelNode::new(entry.id, entry.role).with_labels(entry.train_labels);
        node.dataset_ref = entry.dataset_ref;
        if let Some(rel) = &entry.model {
            node.model = Some(load_checkpoint(&dir.join(rel))?);
        }
        if let Some(rel) = &entry.fim {
            node.model_fim = Some(load_fim(&dir.join(rel))?);
        }
        umig.add_node(node)?;
    }
    for e in doc.edges {
        umig.add_edge(&e.parent, &e.child, e.weight)?;
    }
    Ok(umig)
}
