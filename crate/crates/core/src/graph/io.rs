//! Dataset directory format.
//!
//! ```text
//! meta.json     {"num_nodes": n, "num_features": d, "num_classes": c, "directed": bool}
//! edges.bin     (u: u32, v: u32) pairs
//! features.bin  n·d f32, row-major
//! labels.bin    n u32
//! splits.bin    n u8 (0 = train, 1 = val, 2 = test)
//! ```
//!
//! Every multi-byte value is little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AttributedGraph, CsrAdjacency, EdgeMode, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.bin";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const SPLITS_FILE: &str = "splits.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub directed: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Keep the direction of a `directed` dataset (in-neighborhoods) instead
    /// of symmetrizing it.
    pub preserve_direction: bool,
    pub add_self_loops: bool,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn expect_len(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::dataset(
            path,
            format!("size mismatch: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>, options: LoadOptions) -> Result<AttributedGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta = serde_json::from_slice(&read(&meta_path)?)
        .map_err(|e| Error::dataset(&meta_path, e.to_string()))?;
    let n = meta.num_nodes;
    let d = meta.num_features;

    let edges_path = dir.join(EDGES_FILE);
    let raw = read(&edges_path)?;
    if raw.len() % 8 != 0 {
        return Err(Error::dataset(
            &edges_path,
            format!("size mismatch: {} bytes is not a whole number of u32 pairs", raw.len()),
        ));
    }
    let edges: Vec<(u32, u32)> = raw
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                u32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u as usize >= n || v as usize >= n) {
        return Err(Error::dataset(
            &edges_path,
            format!("edge ({u}, {v}) references a node outside 0..{n}"),
        ));
    }

    let features_path = dir.join(FEATURES_FILE);
    let raw = read(&features_path)?;
    expect_len(&features_path, &raw, n * d * 4)?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::dataset(
            &features_path,
            format!("non-finite feature at node {} column {}", i / d, i % d),
        ));
    }
    let features = Matrix::from_vec(n, d, values)?;

    let labels_path = dir.join(LABELS_FILE);
    let raw = read(&labels_path)?;
    expect_len(&labels_path, &raw, n * 4)?;
    let labels: Vec<u32> = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some((v, &y)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y as usize >= meta.num_classes)
    {
        return Err(Error::dataset(
            &labels_path,
            format!("node {v} has label {y} >= num_classes {}", meta.num_classes),
        ));
    }

    let splits_path = dir.join(SPLITS_FILE);
    let raw = read(&splits_path)?;
    expect_len(&splits_path, &raw, n)?;
    let split = raw
        .iter()
        .enumerate()
        .map(|(v, &code)| {
            Split::from_code(code).ok_or_else(|| {
                Error::dataset(&splits_path, format!("node {v} has unknown split code {code}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mode = if meta.directed && options.preserve_direction {
        EdgeMode::InNeighbors
    } else {
        EdgeMode::Symmetrize
    };
    let mut adj = CsrAdjacency::from_edges(n, &edges, mode)?;
    if options.add_self_loops {
        adj = adj.with_self_loops();
    }
    AttributedGraph::new(adj, features, labels, meta.num_classes, split, edges.len())
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|source| Error::Io { path, source })
}

/// Writes `graph` in the dataset directory layout. Symmetric adjacencies are
/// written as undirected (each pair once, `u <= v`); others as their directed
/// entry list.
pub fn write_dataset(dir: impl AsRef<Path>, graph: &AttributedGraph) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let adj = graph.adjacency();
    let directed = !adj.is_symmetric();
    let meta = DatasetMeta {
        num_nodes: graph.num_nodes(),
        num_features: graph.num_features(),
        num_classes: graph.num_classes(),
        directed,
    };
    let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    write(dir.join(META_FILE), &json)?;

    let mut edges = Vec::with_capacity(adj.num_entries() * 8);
    for (row, col) in adj.entries() {
        if !directed && col > row {
            continue;
        }
        // entry (row, col) is the edge col -> row
        edges.extend_from_slice(&(col as u32).to_le_bytes());
        edges.extend_from_slice(&(row as u32).to_le_bytes());
    }
    write(dir.join(EDGES_FILE), &edges)?;

    let features: Vec<u8> = graph
        .features()
        .data()
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect();
    write(dir.join(FEATURES_FILE), &features)?;
    let labels: Vec<u8> = graph.labels().iter().flat_map(|y| y.to_le_bytes()).collect();
    write(dir.join(LABELS_FILE), &labels)?;
    let splits: Vec<u8> = graph.split().iter().map(|s| s.code()).collect();
    write(dir.join(SPLITS_FILE), &splits)
}
