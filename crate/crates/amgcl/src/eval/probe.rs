//! Node-classification probe: k-fold cross-validation with a two-layer graph
//! convolutional classifier on the subgraph induced by the target nodes.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::tensor::{glorot_uniform, Activation, AdamConfig, ParamSet, Tape};
use crate::util::derive_seed;

/// Classifier probe settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without any training-loss improvement before stopping.
    pub patience: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: 256,
            dropout: 0.2,
            lr: 0.001,
            max_epochs: 1000,
            patience: 50,
            folds: 5,
            seed: 0,
        }
    }
}

/// Deterministic fold partition of `0..n`: a seeded shuffle chopped into
/// `folds` nearly equal chunks. Chunks are disjoint and cover all indices.
pub(crate) fn fold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    (0..folds)
        .map(|f| order[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

/// Cross-validated accuracy of a 2-layer graph-convolution classifier that
/// reads `inputs` rows as node features.
///
/// The classifier is trained on the subgraph induced by `target_nodes`
/// (edges with both endpoints in the set). Returns one test accuracy per
/// fold.
pub fn classify_probe(
    inputs: &Array2<f64>,
    graph: &SparseGraph,
    labels: &[usize],
    num_classes: usize,
    target_nodes: &[usize],
    cfg: &ProbeConfig,
) -> Result<Vec<f64>> {
    if labels.len() != graph.num_nodes() || inputs.nrows() != graph.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "classify_probe",
            left: vec![graph.num_nodes()],
            right: vec![inputs.nrows(), labels.len()],
        });
    }
    if target_nodes.len() < cfg.folds {
        return Err(Error::Invalid(format!(
            "{} target nodes cannot fill {} folds",
            target_nodes.len(),
            cfg.folds
        )));
    }
    if num_classes < 2 {
        return Err(Error::Invalid("need at least two classes".into()));
    }
    if let Some(&bad) = target_nodes
        .iter()
        .find(|&&n| n >= graph.num_nodes() || labels[n] >= num_classes)
    {
        return Err(Error::Invalid(format!(
            "target node {bad} out of range or unlabeled"
        )));
    }

    // Induced subgraph over the target nodes, locally reindexed.
    let mut local_of = vec![usize::MAX; graph.num_nodes()];
    for (local, &node) in target_nodes.iter().enumerate() {
        local_of[node] = local;
    }
    let mut sub_edges = Vec::new();
    for &node in target_nodes {
        for &nb in graph.neighbors(node) {
            if node < nb && local_of[nb] != usize::MAX {
                sub_edges.push((local_of[node], local_of[nb]));
            }
        }
    }
    let sub_graph = SparseGraph::build(&sub_edges, target_nodes.len())?;
    let sub_adj = sub_graph.normalized();
    let mut sub_inputs = Array2::zeros((target_nodes.len(), inputs.ncols()));
    let mut sub_labels = Vec::with_capacity(target_nodes.len());
    for (local, &node) in target_nodes.iter().enumerate() {
        sub_inputs.row_mut(local).assign(&inputs.row(node));
        sub_labels.push(labels[node]);
    }

    let fold_sets = fold_partition(target_nodes.len(), cfg.folds, cfg.seed);
    let mut accuracies = Vec::with_capacity(cfg.folds);
    for (fold_idx, test_rows) in fold_sets.iter().enumerate() {
        let mut is_test = vec![false; target_nodes.len()];
        for &r in test_rows {
            is_test[r] = true;
        }
        let train_rows: Vec<usize> = (0..target_nodes.len()).filter(|&r| !is_test[r]).collect();
        let acc = train_one_fold(
            &sub_adj,
            &sub_inputs,
            &sub_labels,
            num_classes,
            &train_rows,
            test_rows,
            cfg,
            derive_seed(cfg.seed, 0x100 + fold_idx as u64),
        )?;
        accuracies.push(acc);
    }
    Ok(accuracies)
}

#[allow(clippy::too_many_arguments)]
fn train_one_fold(
    adj: &crate::graph::NormalizedAdjacency,
    inputs: &Array2<f64>,
    labels: &[usize],
    num_classes: usize,
    train_rows: &[usize],
    test_rows: &[usize],
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<f64> {
    let in_dim = inputs.ncols();
    let mut params = ParamSet::new();
    params.insert("w1", glorot_uniform(in_dim, cfg.hidden, derive_seed(seed, 1)));
    params.insert("w2", glorot_uniform(cfg.hidden, num_classes, derive_seed(seed, 2)));
    let adam = AdamConfig::with_lr(cfg.lr);

    let forward = |tape: &mut Tape, params: &ParamSet, train: bool, epoch: usize| {
        let x = tape.constant(inputs.clone());
        let w1 = tape.param(params.get("w1").clone());
        let w2 = tape.param(params.get("w2").clone());
        let hidden = tape.gcn_layer(adj, x, w1, Activation::Relu)?;
        let hidden = tape.dropout(
            hidden,
            cfg.dropout,
            derive_seed(seed, 0x1000 + epoch as u64),
            train,
        )?;
        let logits = tape.gcn_layer(adj, hidden, w2, Activation::Identity)?;
        Ok::<_, Error>((w1, w2, logits))
    };

    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let (w1, w2, logits) = forward(&mut tape, &params, true, epoch)?;
        let loss = tape.cross_entropy(logits, labels, train_rows)?;
        let loss_value = tape.scalar_value(loss);
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                value: loss_value,
            });
        }
        tape.backward(loss)?;
        let mut grads = BTreeMap::new();
        grads.insert("w1".to_string(), tape.grad_or_zeros(w1));
        grads.insert("w2".to_string(), tape.grad_or_zeros(w2));
        params.adam_step(&grads, &adam)?;

        if loss_value < best_loss - 1e-9 {
            best_loss = loss_value;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    // Evaluation pass with dropout off.
    let mut tape = Tape::new();
    let (_, _, logits) = forward(&mut tape, &params, false, 0)?;
    let predictions = tape.value(logits);
    let correct = test_rows
        .iter()
        .filter(|&&row| {
            let scores = predictions.row(row);
            let mut best = 0;
            for (c, &v) in scores.iter().enumerate() {
                if v > scores[best] {
                    best = c;
                }
            }
            best == labels[row]
        })
        .count();
    Ok(correct as f64 / test_rows.len() as f64)
}
