//! Planted-partition graphs with class-centroid features.

use serde::{Deserialize, Serialize};

use super::{AttributedGraph, CsrAdjacency, EdgeMode, Split};
use crate::error::{Error, Result};
use crate::tensor::{DetRng, Matrix};

const EDGE_STREAM: u64 = 0;
const FEATURE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Edge probability between two nodes of the same class.
    pub p_in: f64,
    /// Edge probability between nodes of different classes.
    pub p_out: f64,
    /// Magnitude of the one-hot class centroid added to the unit Gaussian noise.
    pub signal: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Chooses `p_in`/`p_out` so that the expected degree is `avg_degree`, with
    /// `intra_fraction` of it falling inside the node's own class.
    pub fn with_average_degree(
        nodes: usize,
        classes: usize,
        features: usize,
        avg_degree: f64,
        intra_fraction: f64,
        signal: f64,
        seed: u64,
    ) -> Self {
        let block = (nodes / classes.max(1)).max(1) as f64;
        let inside = (block - 1.0).max(1.0);
        let outside = (nodes as f64 - block).max(1.0);
        Self {
            nodes,
            classes,
            features,
            p_in: (avg_degree * intra_fraction / inside).clamp(0.0, 1.0),
            p_out: (avg_degree * (1.0 - intra_fraction) / outside).clamp(0.0, 1.0),
            signal,
            seed,
        }
    }
}

/// Calls `emit` with the ascending indices in `0..total` that survive
/// independent Bernoulli(`p`) trials, by sampling geometric gaps.
fn bernoulli_indices(total: u64, p: f64, rng: &mut DetRng, mut emit: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_q = (-p).ln_1p();
    let mut next: u64 = 0;
    loop {
        let u = rng.uniform();
        let gap = ((1.0 - u).ln() / log_q).floor() as u64;
        next = match next.checked_add(gap) {
            Some(i) if i < total => i,
            _ => return,
        };
        emit(next);
        next += 1;
    }
}

/// Class `c` owns the contiguous node block `[c·n/k, (c+1)·n/k)`.
fn block_bounds(nodes: usize, classes: usize) -> Vec<(usize, usize)> {
    (0..classes)
        .map(|c| (c * nodes / classes, (c + 1) * nodes / classes))
        .collect()
}

pub fn synth_graph(cfg: &SynthConfig) -> Result<AttributedGraph> {
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("synthetic graphs need at least 2 classes".into()));
    }
    if cfg.nodes < cfg.classes {
        return Err(Error::InvalidArgument(format!(
            "{} nodes cannot hold {} classes",
            cfg.nodes, cfg.classes
        )));
    }
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if !(cfg.signal >= 0.0 && cfg.signal.is_finite()) {
        return Err(Error::InvalidArgument(format!("signal must be >= 0, got {}", cfg.signal)));
    }
    if cfg.features == 0 {
        return Err(Error::InvalidArgument("synthetic graphs need at least 1 feature".into()));
    }

    let n = cfg.nodes;
    let blocks = block_bounds(n, cfg.classes);
    let mut labels = vec![0u32; n];
    for (c, &(lo, hi)) in blocks.iter().enumerate() {
        labels[lo..hi].fill(c as u32);
    }

    let mut rng = DetRng::new(cfg.seed, EDGE_STREAM);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for &(lo, hi) in &blocks {
        let m = (hi - lo) as u64;
        let total = m * m.saturating_sub(1) / 2;
        // decode upper-triangle indices incrementally: row i holds m-1-i pairs
        let (mut row, mut row_start) = (0u64, 0u64);
        bernoulli_indices(total, cfg.p_in, &mut rng, |k| {
            while k >= row_start + (m - 1 - row) {
                row_start += m - 1 - row;
                row += 1;
            }
            let col = row + 1 + (k - row_start);
            edges.push(((lo as u64 + row) as u32, (lo as u64 + col) as u32));
        });
    }
    for a in 0..blocks.len() {
        for b in (a + 1)..blocks.len() {
            let (a_lo, a_hi) = blocks[a];
            let (b_lo, b_hi) = blocks[b];
            let width = (b_hi - b_lo) as u64;
            let total = (a_hi - a_lo) as u64 * width;
            bernoulli_indices(total, cfg.p_out, &mut rng, |k| {
                edges.push(((a_lo as u64 + k / width) as u32, (b_lo as u64 + k % width) as u32));
            });
        }
    }

    let mut rng = DetRng::new(cfg.seed, FEATURE_STREAM);
    let d = cfg.features;
    let features = Matrix::from_fn(n, d, |v, c| {
        let centroid = if c == labels[v] as usize % d { cfg.signal } else { 0.0 };
        (centroid + rng.normal()) as f32
    });

    let mut rng = DetRng::new(cfg.seed, SPLIT_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = n.div_ceil(2);
    let n_val = (n + 2) / 4;
    let mut split = vec![Split::Test; n];
    for (rank, &v) in order.iter().enumerate() {
        split[v] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let adj = CsrAdjacency::from_edges(n, &edges, EdgeMode::Symmetrize)?;
    AttributedGraph::new(adj, features, labels, cfg.classes, split, edges.len())
}
