//! Core immutable data model: CSR graphs, symmetric normalization, partially
//! observed feature matrices and node splits.
//!
//! All types here are immutable after construction and safe to share across
//! threads for read-only use.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Undirected graph in compressed sparse row form with precomputed degrees.
///
/// Invariants enforced by [`SparseGraph::build`]: the adjacency is symmetric,
/// rows are sorted, and there are no self-loops or duplicate entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    degrees: Vec<usize>,
}

impl SparseGraph {
    /// Builds a CSR graph from an edge list that may contain duplicates,
    /// self-loops and both orientations of the same edge.
    pub fn build(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self> {
        for &(src, dst) in edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(Error::EdgeOutOfRange {
                    src,
                    dst,
                    num_nodes,
                });
            }
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(src, dst) in edges {
            if src == dst {
                continue;
            }
            adj[src].push(dst);
            adj[dst].push(src);
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::new();
        let mut degrees = Vec::with_capacity(num_nodes);
        row_offsets.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_indices.extend_from_slice(row);
            degrees.push(row.len());
            row_offsets.push(col_indices.len());
        }
        Ok(SparseGraph {
            num_nodes,
            row_offsets,
            col_indices,
            degrees,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges (each stored twice in CSR).
    pub fn num_undirected_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degrees[node]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Iterates every undirected edge once as `(i, j)` with `i < j`,
    /// in CSR row order.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| i < j)
                .map(move |j| (i, j))
        })
    }

    /// Symmetric degree normalization: every stored edge `(i, j)` receives
    /// weight `1 / sqrt(deg(i) * deg(j))`. Isolated nodes keep empty rows.
    pub fn normalized(&self) -> NormalizedAdjacency {
        let weights = (0..self.num_nodes)
            .flat_map(|i| {
                self.neighbors(i)
                    .iter()
                    .map(move |&j| 1.0 / ((self.degrees[i] * self.degrees[j]) as f64).sqrt())
            })
            .collect();
        NormalizedAdjacency {
            inner: Arc::new(AdjInner {
                num_nodes: self.num_nodes,
                row_offsets: self.row_offsets.clone(),
                col_indices: self.col_indices.clone(),
                weights,
            }),
        }
    }
}

#[derive(Debug)]
struct AdjInner {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
}

/// Symmetrically normalized adjacency sharing the sparsity pattern of the
/// graph it was built from. Cloning is cheap (shared storage).
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    inner: Arc<AdjInner>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.inner.num_nodes
    }

    /// Neighbor ids and edge weights of `node`, in sorted column order.
    pub fn row(&self, node: usize) -> (&[usize], &[f64]) {
        let lo = self.inner.row_offsets[node];
        let hi = self.inner.row_offsets[node + 1];
        (
            &self.inner.col_indices[lo..hi],
            &self.inner.weights[lo..hi],
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.inner.weights
    }

    /// Weight of edge `(i, j)` if present.
    pub fn weight_between(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, weights) = self.row(i);
        cols.binary_search(&j).ok().map(|pos| weights[pos])
    }

    /// Sparse-times-dense product: `out[i, :] = sum_j w_ij * dense[j, :]`.
    ///
    /// Rows are computed independently (parallelized over row blocks) with the
    /// per-row accumulation always in CSR order, so the result is
    /// bit-reproducible regardless of thread count.
    pub fn spmm_dense(&self, dense: &Array2<f64>) -> Result<Array2<f64>> {
        if dense.nrows() != self.inner.num_nodes {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                left: vec![self.inner.num_nodes, self.inner.num_nodes],
                right: dense.shape().to_vec(),
            });
        }
        let cols = dense.ncols();
        let mut out = Array2::<f64>::zeros((self.inner.num_nodes, cols));
        let dense_slice = dense
            .as_slice()
            .expect("dense input must be standard layout");
        let inner = &*self.inner;
        out.as_slice_mut()
            .expect("freshly allocated output is standard layout")
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, out_row)| {
                let lo = inner.row_offsets[i];
                let hi = inner.row_offsets[i + 1];
                for idx in lo..hi {
                    let j = inner.col_indices[idx];
                    let w = inner.weights[idx];
                    let src = &dense_slice[j * cols..(j + 1) * cols];
                    for (o, s) in out_row.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            });
        Ok(out)
    }
}

/// Dense node-attribute matrix with a per-row observation flag.
///
/// Rows flagged unobserved are zero: the constructor zeroes them so the
/// precoder always starts missing rows from the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    observed_mask: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(mut values: Array2<f64>, observed_mask: Vec<bool>) -> Result<Self> {
        if values.nrows() != observed_mask.len() {
            return Err(Error::ShapeMismatch {
                op: "feature_matrix",
                left: values.shape().to_vec(),
                right: vec![observed_mask.len()],
            });
        }
        for (i, observed) in observed_mask.iter().enumerate() {
            if !observed {
                values.row_mut(i).fill(0.0);
            }
        }
        Ok(FeatureMatrix {
            values,
            observed_mask,
        })
    }

    /// A matrix where every row is observed.
    pub fn fully_observed(values: Array2<f64>) -> Self {
        let n = values.nrows();
        FeatureMatrix {
            values,
            observed_mask: vec![true; n],
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed_mask
    }

    pub fn is_observed(&self, node: usize) -> bool {
        self.observed_mask[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Replaces the value matrix, keeping the mask. Rows flagged unobserved
    /// are NOT re-zeroed; this is how the precoder writes imputed estimates.
    pub(crate) fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::ShapeMismatch {
                op: "with_values",
                left: self.values.shape().to_vec(),
                right: values.shape().to_vec(),
            });
        }
        Ok(FeatureMatrix {
            values,
            observed_mask: self.observed_mask.clone(),
        })
    }
}

/// Partition of the node set into observed training nodes and missing
/// validation/test nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    train_observed: Vec<usize>,
    missing_val: Vec<usize>,
    missing_test: Vec<usize>,
    seed: u64,
}

impl Split {
    /// Validates that the three sets are pairwise disjoint, cover
    /// `[0, num_nodes)`, and that val:test respects `ratio` within one
    /// element of rounding.
    pub fn new(
        mut train_observed: Vec<usize>,
        mut missing_val: Vec<usize>,
        mut missing_test: Vec<usize>,
        seed: u64,
        num_nodes: usize,
        ratio: (usize, usize),
    ) -> Result<Self> {
        train_observed.sort_unstable();
        missing_val.sort_unstable();
        missing_test.sort_unstable();
        let mut seen = vec![false; num_nodes];
        for &node in train_observed
            .iter()
            .chain(&missing_val)
            .chain(&missing_test)
        {
            if node >= num_nodes {
                return Err(Error::Invalid(format!(
                    "split references node {node} outside [0, {num_nodes})"
                )));
            }
            if seen[node] {
                return Err(Error::Invalid(format!(
                    "split assigns node {node} to more than one set"
                )));
            }
            seen[node] = true;
        }
        if seen.iter().any(|s| !s) {
            let missing = seen.iter().position(|s| !s).unwrap();
            return Err(Error::Invalid(format!(
                "split does not cover node {missing}"
            )));
        }
        let n_missing = missing_val.len() + missing_test.len();
        let (a, b) = ratio;
        let ideal_val = n_missing as f64 * a as f64 / (a + b) as f64;
        if (missing_val.len() as f64 - ideal_val).abs() > 1.0 {
            return Err(Error::Invalid(format!(
                "val:test sizes {}:{} do not respect ratio {a}:{b}",
                missing_val.len(),
                missing_test.len()
            )));
        }
        Ok(Split {
            train_observed,
            missing_val,
            missing_test,
            seed,
        })
    }

    pub fn train_observed(&self) -> &[usize] {
        &self.train_observed
    }

    pub fn missing_val(&self) -> &[usize] {
        &self.missing_val
    }

    pub fn missing_test(&self) -> &[usize] {
        &self.missing_test
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All missing nodes (validation then test).
    pub fn missing_nodes(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .missing_val
            .iter()
            .chain(&self.missing_test)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }

    pub fn num_nodes(&self) -> usize {
        self.train_observed.len() + self.missing_val.len() + self.missing_test.len()
    }

    /// `true` at index i iff node i is observed.
    pub fn observed_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.num_nodes()];
        for &node in &self.train_observed {
            flags[node] = true;
        }
        flags
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn build_dedups_and_drops_self_loops() {
        let g = SparseGraph::build(&[(0, 1), (1, 0), (1, 1)], 2).unwrap();
        assert_eq!(g.degrees(), &[1, 1]);
        assert_eq!(g.num_undirected_edges(), 1);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn build_empty_edge_list() {
        let g = SparseGraph::build(&[], 3).unwrap();
        assert_eq!(g.degrees(), &[0, 0, 0]);
        assert_eq!(g.num_undirected_edges(), 0);
    }

    #[test]
    fn build_path_graph() {
        let g = SparseGraph::build(&[(0, 1), (1, 2)], 3).unwrap();
        assert_eq!(g.degrees(), &[1, 2, 1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn build_rejects_out_of_range() {
        let err = SparseGraph::build(&[(0, 3)], 3).unwrap_err();
        match err {
            Error::EdgeOutOfRange { src, dst, num_nodes } => {
                assert_eq!((src, dst, num_nodes), (0, 3, 3));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn build_is_idempotent() {
        let g = SparseGraph::build(&[(2, 0), (0, 1), (1, 0), (3, 2)], 4).unwrap();
        let edges: Vec<(usize, usize)> = g.undirected_edges().collect();
        let rebuilt = SparseGraph::build(&edges, 4).unwrap();
        assert_eq!(g, rebuilt);
    }

    #[test]
    fn normalize_path_weights() {
        let g = SparseGraph::build(&[(0, 1), (1, 2)], 3).unwrap();
        let adj = g.normalized();
        let w01 = adj.weight_between(0, 1).unwrap();
        let w12 = adj.weight_between(1, 2).unwrap();
        assert!((w01 - 0.7071067811865475).abs() < 1e-15);
        assert!((w12 - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn normalize_single_edge_and_clique() {
        let g = SparseGraph::build(&[(0, 1)], 2).unwrap();
        assert_eq!(g.normalized().weight_between(0, 1), Some(1.0));

        let clique = SparseGraph::build(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        let adj = clique.normalized();
        for (i, j) in clique.undirected_edges() {
            assert_eq!(adj.weight_between(i, j), Some(0.5));
        }
    }

    #[test]
    fn normalize_isolated_node_has_empty_row() {
        let g = SparseGraph::build(&[(0, 1)], 3).unwrap();
        let adj = g.normalized();
        let (cols, weights) = adj.row(2);
        assert!(cols.is_empty() && weights.is_empty());
    }

    #[test]
    fn spmm_with_no_edges_is_zero() {
        let g = SparseGraph::build(&[], 3).unwrap();
        let x = array![[1.0], [2.0], [3.0]];
        let y = g.normalized().spmm_dense(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spmm_single_unit_edge_swaps_rows() {
        let g = SparseGraph::build(&[(0, 1)], 2).unwrap();
        let x = array![[1.0], [0.0]];
        let y = g.normalized().spmm_dense(&x).unwrap();
        assert_eq!(y, array![[0.0], [1.0]]);
    }

    #[test]
    fn spmm_on_path() {
        let g = SparseGraph::build(&[(0, 1), (1, 2)], 3).unwrap();
        let adj = g.normalized();
        let x = array![[0.0], [1.0], [0.0]];
        let y = adj.spmm_dense(&x).unwrap();
        assert!((y[[0, 0]] - 0.7071067811865475).abs() < 1e-15);
        assert!(y[[1, 0]].abs() < 1e-15);
        assert!((y[[2, 0]] - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn feature_matrix_zeroes_unobserved_rows() {
        let values = array![[1.0, 2.0], [3.0, 4.0]];
        let fm = FeatureMatrix::new(values, vec![true, false]).unwrap();
        assert_eq!(fm.values().row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(fm.values().row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn split_validates_partition() {
        let ok = Split::new(vec![0, 1, 2, 3], vec![4], vec![5, 6, 7, 8, 9], 7, 10, (1, 5));
        assert!(ok.is_ok());

        let overlap = Split::new(vec![0, 1], vec![1], vec![2], 7, 3, (1, 5));
        assert!(overlap.is_err());

        let uncovered = Split::new(vec![0], vec![1], vec![], 7, 3, (1, 5));
        assert!(uncovered.is_err());
    }
}
