//! Graph storage, degree normalization, dataset IO and synthetic graphs.
//!
//! All structures here are immutable once built and are shared read-only by
//! every worker.

mod io;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use io::{load_dataset, write_dataset, DatasetMeta, LoadOptions};
pub use synth::{synth_graph, SynthConfig};

/// How an edge list becomes neighbor lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    /// Every `(u, v)` also inserts `(v, u)`.
    Symmetrize,
    /// Direction is kept: row `v` lists the sources `u` of edges `u -> v`.
    InNeighbors,
}

/// Compressed sparse row adjacency. Row `v` is the neighbor set `N(v)`,
/// sorted ascending and free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrAdjacency {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    symmetric: bool,
}

impl CsrAdjacency {
    pub fn from_edges(num_nodes: usize, edges: &[(u32, u32)], mode: EdgeMode) -> Result<Self> {
        if num_nodes > u32::MAX as usize {
            return Err(Error::InvalidGraph(format!("{num_nodes} nodes exceed u32 ids")));
        }
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(match mode {
            EdgeMode::Symmetrize => edges.len() * 2,
            EdgeMode::InNeighbors => edges.len(),
        });
        for &(u, v) in edges {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{num_nodes}"
                )));
            }
            // (row, col): row v gathers from col u
            pairs.push((v, u));
            if mode == EdgeMode::Symmetrize && u != v {
                pairs.push((u, v));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut row_offsets = vec![0usize; num_nodes + 1];
        for &(r, _) in &pairs {
            row_offsets[r as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = pairs.into_iter().map(|(_, c)| c).collect();
        let mut adj = Self {
            num_nodes,
            row_offsets,
            col_indices,
            symmetric: false,
        };
        adj.symmetric = mode == EdgeMode::Symmetrize || adj.check_symmetric();
        Ok(adj)
    }

    /// Builds from raw CSR arrays, checking every structural invariant.
    pub fn from_raw(num_nodes: usize, row_offsets: Vec<usize>, col_indices: Vec<u32>) -> Result<Self> {
        let mut adj = Self {
            num_nodes,
            row_offsets,
            col_indices,
            symmetric: false,
        };
        adj.validate()?;
        adj.symmetric = adj.check_symmetric();
        Ok(adj)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.row_offsets.len() != n + 1 {
            return Err(Error::InvalidGraph(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                n + 1
            )));
        }
        if self.row_offsets[0] != 0 || self.row_offsets[n] != self.col_indices.len() {
            return Err(Error::InvalidGraph("row_offsets endpoints are inconsistent".into()));
        }
        for v in 0..n {
            if self.row_offsets[v] > self.row_offsets[v + 1] {
                return Err(Error::InvalidGraph(format!("row_offsets decreases at row {v}")));
            }
            let row = self.neighbors(v);
            if row.iter().any(|&c| c as usize >= n) {
                return Err(Error::InvalidGraph(format!("row {v} has an out-of-range column")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "row {v} is not strictly ascending (unsorted or duplicate)"
                )));
            }
        }
        Ok(())
    }

    fn check_symmetric(&self) -> bool {
        (0..self.num_nodes).all(|v| {
            self.neighbors(v)
                .iter()
                .all(|&u| self.neighbors(u as usize).binary_search(&(v as u32)).is_ok())
        })
    }

    /// Adds `(v, v)` for every node that lacks it.
    pub fn with_self_loops(&self) -> Self {
        let edges: Vec<(u32, u32)> = self
            .entries()
            .map(|(r, c)| (c as u32, r as u32))
            .chain((0..self.num_nodes as u32).map(|v| (v, v)))
            .collect();
        let mut adj = Self::from_edges(self.num_nodes, &edges, EdgeMode::InNeighbors)
            .expect("entries of a valid adjacency are in range");
        adj.symmetric = self.symmetric;
        adj
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored `(row, col)` entries.
    #[inline]
    pub fn num_entries(&self) -> usize {
        self.col_indices.len()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    /// `(u, v) present ⇔ (v, u) present`.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// All `(row, col)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |v| self.neighbors(v).iter().map(move |&u| (v, u as usize)))
    }
}

/// `s[v] = 1 / sqrt(|N(v)|)`, zero for isolated nodes. The aggregation weight
/// of entry `(v, u)` is `s[u]·s[v]`.
pub fn degree_norms(adj: &CsrAdjacency) -> Vec<f64> {
    (0..adj.num_nodes())
        .map(|v| match adj.degree(v) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// A node-classification graph: structure, features, labels and split.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    adj: CsrAdjacency,
    features: Matrix<f32>,
    labels: Vec<u32>,
    num_classes: usize,
    split: Vec<Split>,
    norm_scale: Vec<f64>,
    edge_records: usize,
}

impl AttributedGraph {
    /// `edge_records` is the number of edges in the source listing (before
    /// symmetrization or deduplication); it is what dataset statistics report.
    pub fn new(
        adj: CsrAdjacency,
        features: Matrix<f32>,
        labels: Vec<u32>,
        num_classes: usize,
        split: Vec<Split>,
        edge_records: usize,
    ) -> Result<Self> {
        let n = adj.num_nodes();
        if features.rows() != n || labels.len() != n || split.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{n} nodes but {} feature rows, {} labels, {} split tags",
                features.rows(),
                labels.len(),
                split.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidGraph("num_classes must be positive".into()));
        }
        if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y as usize >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "node {v} has label {y} but there are {num_classes} classes"
            )));
        }
        if let Some(i) = features.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature of node {} column {}",
                i / features.cols().max(1),
                i % features.cols().max(1)
            )));
        }
        let norm_scale = degree_norms(&adj);
        Ok(Self {
            adj,
            features,
            labels,
            num_classes,
            split,
            norm_scale,
            edge_records,
        })
    }

    pub fn adjacency(&self) -> &CsrAdjacency {
        &self.adj
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn norm_scale(&self) -> &[f64] {
        &self.norm_scale
    }

    pub fn edge_records(&self) -> usize {
        self.edge_records
    }

    /// Node ids carrying the given split tag, ascending.
    pub fn split_indices(&self, which: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == which)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same graph with a self loop added at every node.
    pub fn with_self_loops(&self) -> Self {
        let adj = self.adj.with_self_loops();
        let norm_scale = degree_norms(&adj);
        Self {
            adj,
            norm_scale,
            ..self.clone()
        }
    }
}
