//! Property tests for graph construction and augmentation.

use amgcl::augment::{augment_view, AugmentConfig};
use amgcl::graph::{FeatureMatrix, SparseGraph};
use ndarray::Array2;
use proptest::prelude::*;

fn arb_edges(max_nodes: usize) -> impl Strategy<Value = (Vec<(usize, usize)>, usize)> {
    (2..max_nodes).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..60),
            Just(n),
        )
    })
}

proptest! {
    #[test]
    fn built_graphs_are_symmetric_sorted_and_loop_free((edges, n) in arb_edges(30)) {
        let g = SparseGraph::build(&edges, n).unwrap();
        for i in 0..n {
            let neighbors = g.neighbors(i);
            prop_assert!(neighbors.windows(2).all(|w| w[0] < w[1]), "row not strictly sorted");
            for &j in neighbors {
                prop_assert_ne!(i, j, "self loop survived");
                prop_assert!(g.neighbors(j).contains(&i), "asymmetric edge");
            }
        }
        // degrees agree with offsets
        for i in 0..n {
            prop_assert_eq!(g.degree(i), g.row_offsets()[i + 1] - g.row_offsets()[i]);
        }
    }

    #[test]
    fn rebuilding_from_emitted_edges_is_identity((edges, n) in arb_edges(30)) {
        let g = SparseGraph::build(&edges, n).unwrap();
        let emitted: Vec<(usize, usize)> = g.undirected_edges().collect();
        let rebuilt = SparseGraph::build(&emitted, n).unwrap();
        prop_assert_eq!(g, rebuilt);
    }

    #[test]
    fn normalized_weights_are_symmetric_and_bounded((edges, n) in arb_edges(30)) {
        let g = SparseGraph::build(&edges, n).unwrap();
        let adj = g.normalized();
        for (i, j) in g.undirected_edges() {
            let wij = adj.weight_between(i, j).unwrap();
            let wji = adj.weight_between(j, i).unwrap();
            prop_assert_eq!(wij, wji, "weights not symmetric");
            prop_assert!(wij > 0.0 && wij <= 1.0, "weight {} out of (0, 1]", wij);
        }
        // row sums stay below sqrt(max degree)
        let max_degree = g.degrees().iter().copied().max().unwrap_or(0) as f64;
        for i in 0..n {
            let (_, weights) = adj.row(i);
            let sum: f64 = weights.iter().sum();
            prop_assert!(sum >= 0.0 && sum <= max_degree.sqrt() + 1e-12,
                "row sum {} exceeds sqrt(max degree) {}", sum, max_degree.sqrt());
        }
    }

    #[test]
    fn augmented_views_keep_graph_invariants(
        (edges, n) in arb_edges(24),
        fm_prob in 0.0..0.9f64,
        ed_prob in 0.0..0.9f64,
        seed in 0..5000u64,
    ) {
        let g = SparseGraph::build(&edges, n).unwrap();
        let features = FeatureMatrix::fully_observed(Array2::from_elem((n, 6), 1.0));
        let cfg = AugmentConfig::new(fm_prob, ed_prob, seed);
        let (out_f, out_g) = augment_view(&features, &g, &cfg).unwrap();

        // surviving edges are a subset of the originals, decided per
        // undirected edge (both directions present or neither)
        for i in 0..n {
            for &j in out_g.neighbors(i) {
                prop_assert!(g.neighbors(i).contains(&j), "edge appeared from nowhere");
                prop_assert!(out_g.neighbors(j).contains(&i), "asymmetric dropout");
            }
        }

        // column masking zeroes entire columns and nothing else
        for col in 0..6 {
            let column = out_f.values().column(col);
            let first = column[0];
            prop_assert!(column.iter().all(|&v| v == first), "column mask not graph-level");
            prop_assert!(first == 0.0 || first == 1.0);
        }
    }
}
