//! Stochastic graph views for contrastive training: dimension-wise feature
//! masking plus undirected edge dropout.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, SparseGraph};

/// Augmentation settings for one view.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub feature_mask_prob: f64,
    pub edge_drop_prob: f64,
    pub seed: u64,
}

impl AugmentConfig {
    pub fn new(feature_mask_prob: f64, edge_drop_prob: f64, seed: u64) -> Self {
        AugmentConfig {
            feature_mask_prob,
            edge_drop_prob,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("feature_mask_prob", self.feature_mask_prob),
            ("edge_drop_prob", self.edge_drop_prob),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Produces one stochastic view of `(features, graph)`.
///
/// A single Bernoulli mask over feature columns is drawn (the same mask for
/// every node) and masked columns are zeroed; each undirected edge is then
/// independently dropped. The RNG consumes the column decisions first, then
/// one decision per undirected edge in CSR row order, which makes outcomes
/// enumerable per seed. Deterministic given `cfg.seed`.
pub fn augment_view(
    features: &FeatureMatrix,
    graph: &SparseGraph,
    cfg: &AugmentConfig,
) -> Result<(FeatureMatrix, SparseGraph)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut values = features.values().clone();
    for col in 0..values.ncols() {
        if rng.gen::<f64>() < cfg.feature_mask_prob {
            values.column_mut(col).fill(0.0);
        }
    }
    let masked = features.with_values(values)?;

    let kept: Vec<(usize, usize)> = graph
        .undirected_edges()
        .filter(|_| rng.gen::<f64>() >= cfg.edge_drop_prob)
        .collect();
    let view_graph = SparseGraph::build(&kept, graph.num_nodes())?;
    Ok((masked, view_graph))
}
