use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::CircuitGraph;

/// Node features of one or more graphs plus message edges in CSR form keyed
/// by destination. Message edges are the forward edges, their reversals and
/// one self-loop per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub x: Array2<f64>,
    /// Node offset of each graph, with a trailing total.
    pub offsets: Vec<usize>,
    in_ptr: Vec<usize>,
    in_src: Vec<u32>,
}

impl GraphBatch {
    pub fn from_edges(x: Array2<f64>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = x.nrows();
        let mut incoming: Vec<Vec<u32>> = (0..n).map(|i| vec![i as u32]).collect();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Structural(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                continue;
            }
            incoming[v].push(u as u32);
            incoming[u].push(v as u32);
        }
        let mut in_ptr = Vec::with_capacity(n + 1);
        let mut in_src = Vec::new();
        in_ptr.push(0);
        for mut list in incoming {
            list[1..].sort_unstable();
            list.dedup();
            in_src.extend(list);
            in_ptr.push(in_src.len());
        }
        Ok(GraphBatch { x, offsets: vec![0, n], in_ptr, in_src })
    }

    pub fn from_graph(g: &CircuitGraph, x: Array2<f64>) -> Result<Self> {
        if x.nrows() != g.len() {
            return Err(Error::Structural(format!("{} feature rows for {} nodes", x.nrows(), g.len())));
        }
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (u.idx(), v.idx())).collect();
        Self::from_edges(x, &edges)
    }

    pub fn concat(parts: &[&GraphBatch]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Structural("empty batch".into()));
        }
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.x.view()).collect();
        let x = concatenate(Axis(0), &views).map_err(|e| Error::Structural(e.to_string()))?;
        let mut offsets = vec![0];
        let mut in_ptr = vec![0];
        let mut in_src = Vec::new();
        for p in parts {
            let base = *offsets.last().unwrap();
            for &ptr in &p.offsets[1..] {
                offsets.push(base + ptr);
            }
            in_src.extend(p.in_src.iter().map(|&s| s + base as u32));
            let edge_base = *in_ptr.last().unwrap();
            in_ptr.extend(p.in_ptr[1..].iter().map(|&e| e + edge_base));
        }
        Ok(GraphBatch { x, offsets, in_ptr, in_src })
    }

    pub fn node_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.in_src.len()
    }

    pub fn graph_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Range of message-edge indices ending at node `i`.
    pub fn in_range(&self, i: usize) -> std::ops::Range<usize> {
        self.in_ptr[i]..self.in_ptr[i + 1]
    }

    pub fn source(&self, edge: usize) -> usize {
        self.in_src[edge] as usize
    }
}
