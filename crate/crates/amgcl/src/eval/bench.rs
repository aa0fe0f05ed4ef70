//! Synthetic graphs and per-epoch wall-time measurements across growing
//! problem sizes.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gacls::{train_on_precoded, TrainConfig};
use crate::graph::{FeatureMatrix, SparseGraph, Split};
use crate::ingest::{make_split, Dataset, MaskSpec};
use crate::util::derive_seed;

/// One benchmark configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BenchSize {
    pub nodes: usize,
    pub undirected_edges: usize,
    pub feature_dim: usize,
}

/// Measured cost of one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub size: BenchSize,
    pub seconds_per_epoch: f64,
}

/// Connected random graph: a ring over all nodes plus random chords until the
/// requested undirected edge count is reached. Minimum degree 2, so degree
/// imbalance stays mild.
pub fn synthetic_graph(nodes: usize, undirected_edges: usize, seed: u64) -> Result<SparseGraph> {
    if nodes < 3 {
        return Err(Error::Invalid("synthetic graph needs at least 3 nodes".into()));
    }
    if undirected_edges < nodes {
        return Err(Error::Invalid(format!(
            "need at least {nodes} edges to close the ring"
        )));
    }
    let mut edges: Vec<(usize, usize)> = (0..nodes).map(|i| (i, (i + 1) % nodes)).collect();
    let mut present: std::collections::HashSet<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0usize;
    let max_attempts = undirected_edges * 200;
    while present.len() < undirected_edges {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Invalid(format!(
                "could not place {undirected_edges} edges on {nodes} nodes"
            )));
        }
        let a = rng.gen_range(0..nodes);
        let b = rng.gen_range(0..nodes);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if present.insert(key) {
            edges.push(key);
        }
    }
    SparseGraph::build(&edges, nodes)
}

/// Random fully observed features: Bernoulli(0.15) when `binary`, uniform
/// [0, 1) otherwise.
pub fn synthetic_features(nodes: usize, dim: usize, seed: u64, binary: bool) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((nodes, dim), |_| {
        if binary {
            (rng.gen::<f64>() < 0.15) as u8 as f64
        } else {
            rng.gen::<f64>()
        }
    });
    FeatureMatrix::fully_observed(values)
}

/// A complete synthetic dataset with uniformly random labels.
pub fn synthetic_dataset(size: &BenchSize, classes: usize, seed: u64) -> Result<Dataset> {
    let graph = synthetic_graph(size.nodes, size.undirected_edges, derive_seed(seed, 1))?;
    let features = synthetic_features(size.nodes, size.feature_dim, derive_seed(seed, 2), true);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let labels = (0..size.nodes).map(|_| rng.gen_range(0..classes)).collect();
    Ok(Dataset {
        graph,
        features,
        labels: Some(labels),
        num_classes: classes,
        name: format!(
            "synthetic-n{}-e{}-d{}",
            size.nodes, size.undirected_edges, size.feature_dim
        ),
    })
}

fn bench_split(nodes: usize, seed: u64) -> Result<Split> {
    let size = BenchSize {
        nodes,
        undirected_edges: nodes,
        feature_dim: 1,
    };
    let ds = synthetic_dataset(&size, 2, seed)?;
    make_split(&ds, &MaskSpec::new(0.6, seed))
}

/// Measures the per-epoch training wall time on each configuration.
///
/// Measurements for all configurations are interleaved round-robin and the
/// per-configuration minimum over the timed rounds is reported, so a machine
/// that speeds up or slows down mid-benchmark biases every configuration
/// alike instead of skewing their ratios. The first round per configuration
/// is discarded as warm-up; setup, precoding and the final forward pass are
/// excluded from the timing.
pub fn benchmark_scaling(sizes: &[BenchSize], seed: u64) -> Result<Vec<BenchRow>> {
    const TIMED_EPOCHS: usize = 2;
    const ROUNDS: usize = 5;
    struct Prepared {
        graph: SparseGraph,
        features: FeatureMatrix,
        split: Split,
    }
    let mut prepared = Vec::with_capacity(sizes.len());
    for size in sizes {
        prepared.push(Prepared {
            graph: synthetic_graph(size.nodes, size.undirected_edges, derive_seed(seed, 1))?,
            features: synthetic_features(size.nodes, size.feature_dim, derive_seed(seed, 2), false),
            split: bench_split(size.nodes, derive_seed(seed, 3))?,
        });
    }
    let mut cfg = TrainConfig::new(seed);
    cfg.epochs = TIMED_EPOCHS;
    let mut best = vec![f64::INFINITY; sizes.len()];
    for round in 0..ROUNDS {
        for (idx, prep) in prepared.iter().enumerate() {
            let out = train_on_precoded(&prep.graph, &prep.features, &prep.split, &cfg)?;
            if round > 0 {
                best[idx] = best[idx].min(out.epoch_loop_seconds);
            }
        }
    }
    Ok(sizes
        .iter()
        .zip(best)
        .map(|(size, seconds)| BenchRow {
            size: *size,
            seconds_per_epoch: seconds / TIMED_EPOCHS as f64,
        })
        .collect())
}

/// Empirical scaling exponent between two measurements that differ in
/// exactly one axis: `log(t2/t1) / log(x2/x1)`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingExponent {
    pub axis: &'static str,
    pub from: BenchSize,
    pub to: BenchSize,
    pub exponent: f64,
}

/// Exponents for every ordered pair of rows differing in exactly one axis.
pub fn scaling_exponents(rows: &[BenchRow]) -> Vec<ScalingExponent> {
    let mut out = Vec::new();
    for a in rows {
        for b in rows {
            let (sa, sb) = (a.size, b.size);
            let axis = match (
                sa.nodes == sb.nodes,
                sa.undirected_edges == sb.undirected_edges,
                sa.feature_dim == sb.feature_dim,
            ) {
                (false, true, true) if sb.nodes > sa.nodes => "nodes",
                (true, false, true) if sb.undirected_edges > sa.undirected_edges => "edges",
                (true, true, false) if sb.feature_dim > sa.feature_dim => "feature_dim",
                _ => continue,
            };
            let (x1, x2) = match axis {
                "nodes" => (sa.nodes, sb.nodes),
                "edges" => (sa.undirected_edges, sb.undirected_edges),
                _ => (sa.feature_dim, sb.feature_dim),
            };
            out.push(ScalingExponent {
                axis,
                from: sa,
                to: sb,
                exponent: (b.seconds_per_epoch / a.seconds_per_epoch).ln()
                    / (x2 as f64 / x1 as f64).ln(),
            });
        }
    }
    out
}
