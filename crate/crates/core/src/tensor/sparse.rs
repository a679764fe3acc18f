//! Degree-normalized neighbor aggregation over a CSR adjacency.

use super::{Matrix, Real};
use crate::error::{Error, Result};
use crate::graph::CsrAdjacency;

fn check<T: Real>(adj: &CsrAdjacency, scale: &[T], h: &Matrix<T>) -> Result<()> {
    if h.rows() != adj.num_nodes() {
        return Err(Error::shape("spmm_norm", (adj.num_nodes(), adj.num_nodes()), h.shape()));
    }
    if scale.len() != adj.num_nodes() {
        return Err(Error::shape("spmm_norm scale", (adj.num_nodes(), 1), (scale.len(), 1)));
    }
    Ok(())
}

/// `out[v] = Σ_{u ∈ N(v)} s[u]·s[v]·h[u]`, i.e. `D^-1/2 A D^-1/2 · h` with `s = D^-1/2`.
///
/// Each output row is reduced over its neighbor list in ascending order.
pub fn spmm_norm<T: Real>(adj: &CsrAdjacency, scale: &[T], h: &Matrix<T>) -> Result<Matrix<T>> {
    check(adj, scale, h)?;
    let cols = h.cols();
    let mut out = Matrix::zeros(h.rows(), cols);
    for v in 0..adj.num_nodes() {
        let sv = scale[v];
        if sv == T::zero() {
            continue;
        }
        let row = out.row_mut(v);
        for &u in adj.neighbors(v) {
            let u = u as usize;
            let w = scale[u] * sv;
            for (o, &x) in row.iter_mut().zip(h.row(u)) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`spmm_norm`]: `out[u] = Σ_{v : u ∈ N(v)} s[u]·s[v]·g[v]`.
///
/// On a symmetric adjacency this equals `spmm_norm` (up to summation order);
/// callers use it for graphs whose direction was preserved.
pub fn spmm_norm_transpose<T: Real>(
    adj: &CsrAdjacency,
    scale: &[T],
    g: &Matrix<T>,
) -> Result<Matrix<T>> {
    check(adj, scale, g)?;
    let cols = g.cols();
    let mut out = Matrix::zeros(g.rows(), cols);
    for v in 0..adj.num_nodes() {
        let sv = scale[v];
        if sv == T::zero() {
            continue;
        }
        let src = g.row(v);
        for &u in adj.neighbors(v) {
            let u = u as usize;
            let w = scale[u] * sv;
            for (o, &x) in out.row_mut(u).iter_mut().zip(src) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{degree_norms, CsrAdjacency, EdgeMode};
    use crate::tensor::DetRng;

    /// Dense `D^-1/2 A D^-1/2 · h`, computed independently of the CSR kernel.
    fn dense_oracle(n: usize, edges: &[(u32, u32)], h: &Matrix<f64>) -> Matrix<f64> {
        let mut a = vec![vec![0.0f64; n]; n];
        for &(u, v) in edges {
            if u != v {
                a[u as usize][v as usize] = 1.0;
                a[v as usize][u as usize] = 1.0;
            } else {
                a[u as usize][u as usize] = 1.0;
            }
        }
        let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        Matrix::from_fn(n, h.cols(), |v, c| {
            (0..n)
                .filter(|&u| a[v][u] != 0.0)
                .map(|u| h.get(u, c) / (deg[u].sqrt() * deg[v].sqrt()))
                .sum()
        })
    }

    fn build(n: usize, edges: &[(u32, u32)]) -> (CsrAdjacency, Vec<f64>) {
        let adj = CsrAdjacency::from_edges(n, edges, EdgeMode::Symmetrize).unwrap();
        let s = degree_norms(&adj);
        (adj, s)
    }

    #[test]
    fn edgeless_graph_gives_zero() {
        let (adj, s) = build(3, &[]);
        let h = Matrix::<f64>::filled(3, 2, 1.0);
        assert_eq!(spmm_norm(&adj, &s, &h).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn single_edge_permutes() {
        let (adj, s) = build(2, &[(0, 1)]);
        let h = Matrix::<f64>::identity(2);
        let out = spmm_norm(&adj, &s, &h).unwrap();
        assert_eq!(out, Matrix::from_f64(2, 2, &[0., 1., 1., 0.]).unwrap());
    }

    #[test]
    fn path_graph_matches_dense_oracle() {
        let edges = [(0, 1), (1, 2)];
        let (adj, s) = build(3, &edges);
        let h = Matrix::<f64>::filled(3, 1, 1.0);
        let out = spmm_norm(&adj, &s, &h).unwrap();
        // node 1: two neighbors of degree 1, each weight 1/sqrt(2)
        assert!((out.get(1, 0) - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(out.max_abs_diff(&dense_oracle(3, &edges, &h)).unwrap() < 1e-12);
    }

    #[test]
    fn random_graphs_match_dense_oracle() {
        let mut rng = DetRng::new(2024, 0);
        for trial in 0..200 {
            let n = 1 + trial % 16;
            let mut edges = Vec::new();
            for u in 0..n as u32 {
                for v in (u + 1)..n as u32 {
                    if rng.uniform() < 0.3 {
                        edges.push((u, v));
                    }
                }
            }
            let (adj, s) = build(n, &edges);
            let h = Matrix::<f64>::from_fn(n, 3, |_, _| rng.normal());
            let out = spmm_norm(&adj, &s, &h).unwrap();
            assert!(out.max_abs_diff(&dense_oracle(n, &edges, &h)).unwrap() <= 1e-12);
            let t = spmm_norm_transpose(&adj, &s, &h).unwrap();
            assert!(out.max_abs_diff(&t).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn all_graphs_on_four_nodes_match_dense_oracle() {
        let pairs: Vec<(u32, u32)> = (0..4u32)
            .flat_map(|u| ((u + 1)..4).map(move |v| (u, v)))
            .collect();
        let h = Matrix::<f64>::from_fn(4, 2, |r, c| (r * 2 + c) as f64 - 3.5);
        for bits in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, &e)| e)
                .collect();
            let (adj, s) = build(4, &edges);
            let out = spmm_norm(&adj, &s, &h).unwrap();
            assert!(out.max_abs_diff(&dense_oracle(4, &edges, &h)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint_on_directed_graph() {
        // <A x, y> == <x, Aᵀ y>
        let adj = CsrAdjacency::from_edges(4, &[(0, 1), (1, 2), (3, 2), (2, 0)], EdgeMode::InNeighbors)
            .unwrap();
        let s = degree_norms(&adj);
        let mut rng = DetRng::new(5, 5);
        let x = Matrix::<f64>::from_fn(4, 2, |_, _| rng.normal());
        let y = Matrix::<f64>::from_fn(4, 2, |_, _| rng.normal());
        let ax = spmm_norm(&adj, &s, &x).unwrap();
        let aty = spmm_norm_transpose(&adj, &s, &y).unwrap();
        let lhs: f64 = ax.hadamard(&y).unwrap().data().iter().sum();
        let rhs: f64 = x.hadamard(&aty).unwrap().data().iter().sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let (adj, s) = build(3, &[(0, 1)]);
        let h = Matrix::<f64>::zeros(2, 2);
        assert!(matches!(spmm_norm(&adj, &s, &h), Err(Error::Shape { .. })));
    }
}
