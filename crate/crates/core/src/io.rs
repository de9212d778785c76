//! Graph documents and dataset files.
//!
//! A graph document is one JSON object with a `header`, `nodes[]`,
//! `edges[]`, and optional `features{}` and `labels{}` maps keyed by node
//! id. A dataset file holds one document per line.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabelPair};
use crate::graph::{CircuitGraph, NodeId, PinNode};
use crate::library::CellLibrary;

pub const GRAPH_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pre,
    Post,
    Labeled,
    Inferred,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parse(format!("unknown split {s:?} (expected train, val or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub schema: u32,
    pub role: Role,
    pub id: String,
    pub split: Split,
    pub index: u64,
    pub seed: u64,
    pub width: u32,
    pub library_version: String,
    pub library: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_met: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_area: Option<f64>,
    /// Fingerprint of the normalization statistics used downstream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<String>,
}

impl GraphHeader {
    pub fn check_library(&self, lib: &CellLibrary) -> Result<()> {
        let found = lib.fingerprint();
        if self.library != found {
            return Err(Error::Fingerprint {
                what: format!("cell library of graph {}", self.id),
                expected: self.library.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn expect_role(&self, roles: &[Role]) -> Result<()> {
        if !roles.contains(&self.role) {
            return Err(Error::Consistency(format!("graph {} has role {:?}, expected one of {roles:?}", self.id, self.role)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDoc {
    pub header: GraphHeader,
    pub graph: CircuitGraph,
}

#[derive(Serialize, Deserialize)]
struct RawDoc {
    header: GraphHeader,
    nodes: Vec<PinNode>,
    edges: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<BTreeMap<NodeId, FeatureVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<BTreeMap<NodeId, LabelPair>>,
}

fn dense<T: Copy>(map: BTreeMap<NodeId, T>, n: usize, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = map
            .get(&NodeId(i as u32))
            .ok_or_else(|| Error::Consistency(format!("{what} missing for node n{i}")))?;
        out.push(*v);
    }
    if map.len() != n {
        return Err(Error::Consistency(format!("{what} given for nodes outside the graph")));
    }
    Ok(out)
}

fn indexed<T: Copy>(values: &[T]) -> BTreeMap<NodeId, T> {
    values.iter().enumerate().map(|(i, v)| (NodeId(i as u32), *v)).collect()
}

impl GraphDoc {
    pub fn to_json(&self) -> String {
        let g = &self.graph;
        let raw = RawDoc {
            header: self.header.clone(),
            nodes: g.nodes().to_vec(),
            edges: g.edges().to_vec(),
            features: g.features().map(indexed),
            labels: g.labels().map(indexed),
        };
        serde_json::to_string(&raw).expect("graph document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawDoc = serde_json::from_str(text)?;
        if raw.header.schema != GRAPH_SCHEMA {
            return Err(Error::Parse(format!("unsupported graph schema {}", raw.header.schema)));
        }
        let n = raw.nodes.len();
        let mut graph = CircuitGraph::from_parts(raw.nodes, raw.edges)?;
        if let Some(f) = raw.features {
            graph = graph.with_features(dense(f, n, "features")?)?;
        }
        if let Some(l) = raw.labels {
            graph = graph.with_labels(dense(l, n, "labels")?)?;
        }
        Ok(GraphDoc { header: raw.header, graph })
    }
}

pub fn write_dataset(path: impl AsRef<Path>, docs: &[GraphDoc]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in docs {
        writeln!(w, "{}", d.to_json()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<GraphDoc>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = GraphDoc::from_json(&line).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}:{}: {m}", path.display(), i + 1)),
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}
