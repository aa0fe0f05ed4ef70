//! Feature precoding: iterative Dirichlet-energy-minimizing propagation of
//! observed attributes into missing rows, with observed rows clamped to their
//! input values after every round.
//!
//! The fixed point of the clamped recursion is the harmonic extension of the
//! observed rows; [`harmonic_oracle`] computes it exactly by a direct linear
//! solve and serves as the reference the iterative path is tested against.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, NormalizedAdjacency};

/// Precoder settings. `convergence_tol == 0` runs exactly `iterations`
/// rounds; a positive tolerance allows early exit once the largest absolute
/// per-entry change of a round falls at or below it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecoderConfig {
    pub iterations: usize,
    pub convergence_tol: f64,
    pub clamp_observed: bool,
}

impl Default for PrecoderConfig {
    fn default() -> Self {
        PrecoderConfig {
            iterations: 40,
            convergence_tol: 0.0,
            clamp_observed: true,
        }
    }
}

fn check_dims(features: &FeatureMatrix, adj: &NormalizedAdjacency) -> Result<()> {
    if features.num_nodes() != adj.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "precoder",
            left: vec![features.num_nodes(), features.dim()],
            right: vec![adj.num_nodes()],
        });
    }
    Ok(())
}

/// One round of `x_i <- x_i + sum_j w_ij (x_j - x_i)` over all rows,
/// reading only the previous iterate.
fn propagation_round(x: &Array2<f64>, adj: &NormalizedAdjacency) -> Array2<f64> {
    let cols = x.ncols();
    let x_slice = x.as_slice().expect("propagation iterate is standard layout");
    let mut next = x.clone();
    next.as_slice_mut()
        .expect("propagation iterate is standard layout")
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| {
            let (cols_i, weights_i) = adj.row(i);
            let own = &x_slice[i * cols..(i + 1) * cols];
            for (&j, &w) in cols_i.iter().zip(weights_i) {
                let other = &x_slice[j * cols..(j + 1) * cols];
                for ((r, &o), &s) in row.iter_mut().zip(own).zip(other) {
                    *r += w * (s - o);
                }
            }
        });
    next
}

/// Runs the clamped propagation and returns the imputed feature matrix.
/// Observed rows of the output equal observed rows of the input exactly.
pub fn propagate(
    features: &FeatureMatrix,
    adj: &NormalizedAdjacency,
    cfg: &PrecoderConfig,
) -> Result<FeatureMatrix> {
    propagate_inner(features, adj, cfg, false).map(|(fm, _)| fm)
}

/// Like [`propagate`] but also records the Dirichlet energy of the iterate
/// before the first round and after every round.
pub fn propagate_traced(
    features: &FeatureMatrix,
    adj: &NormalizedAdjacency,
    cfg: &PrecoderConfig,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    propagate_inner(features, adj, cfg, true)
}

fn propagate_inner(
    features: &FeatureMatrix,
    adj: &NormalizedAdjacency,
    cfg: &PrecoderConfig,
    trace: bool,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    check_dims(features, adj)?;
    let original = features.values();
    let mut x = original.clone();
    let mut energies = Vec::new();
    if trace {
        energies.push(energy_of_values(&x, adj));
    }
    for _ in 0..cfg.iterations {
        let mut next = propagation_round(&x, adj);
        if cfg.clamp_observed {
            for (i, &observed) in features.observed_mask().iter().enumerate() {
                if observed {
                    next.row_mut(i).assign(&original.row(i));
                }
            }
        }
        let max_change = if cfg.convergence_tol > 0.0 {
            next.iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        x = next;
        if trace {
            energies.push(energy_of_values(&x, adj));
        }
        if cfg.convergence_tol > 0.0 && max_change <= cfg.convergence_tol {
            break;
        }
    }
    Ok((features.with_values(x)?, energies))
}

/// Exact fixed point of the clamped recursion, solved directly.
///
/// For every missing row i the fixed point satisfies
/// `(sum_j w_ij) x_i - sum_{j missing} w_ij x_j = sum_{j observed} w_ij x_j`.
/// The system is nonsingular exactly when every connected component of the
/// missing-node subgraph touches at least one observed node. Intended for
/// graphs of up to a few thousand nodes (dense solve).
pub fn harmonic_oracle(
    features: &FeatureMatrix,
    adj: &NormalizedAdjacency,
) -> Result<FeatureMatrix> {
    check_dims(features, adj)?;
    let n = features.num_nodes();
    let d = features.dim();
    let missing: Vec<usize> = (0..n).filter(|&i| !features.is_observed(i)).collect();
    if missing.is_empty() {
        return Ok(features.clone());
    }
    check_missing_components(features, adj, &missing)?;

    let mut index_of = vec![usize::MAX; n];
    for (pos, &node) in missing.iter().enumerate() {
        index_of[node] = pos;
    }
    let m = missing.len();
    let mut system = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, d);
    let values = features.values();
    for (pi, &i) in missing.iter().enumerate() {
        let (cols, weights) = adj.row(i);
        let row_sum: f64 = weights.iter().sum();
        system[(pi, pi)] = row_sum;
        for (&j, &w) in cols.iter().zip(weights) {
            if index_of[j] != usize::MAX {
                system[(pi, index_of[j])] -= w;
            } else {
                for k in 0..d {
                    rhs[(pi, k)] += w * values[[j, k]];
                }
            }
        }
    }
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularSystem {
            node: missing[0],
            size: m,
        })?;
    let mut out = values.clone();
    for (pi, &i) in missing.iter().enumerate() {
        for k in 0..d {
            out[[i, k]] = solution[(pi, k)];
        }
    }
    Ok(features.with_values(out)?)
}

/// Errors with the offending component when some missing component has no
/// observed neighbor (including isolated missing nodes).
fn check_missing_components(
    features: &FeatureMatrix,
    adj: &NormalizedAdjacency,
    missing: &[usize],
) -> Result<()> {
    let n = features.num_nodes();
    let mut visited = vec![false; n];
    for &start in missing {
        if visited[start] {
            continue;
        }
        let mut component = vec![start];
        let mut queue = vec![start];
        visited[start] = true;
        let mut touches_observed = false;
        while let Some(node) = queue.pop() {
            let (cols, _) = adj.row(node);
            for &j in cols {
                if features.is_observed(j) {
                    touches_observed = true;
                } else if !visited[j] {
                    visited[j] = true;
                    component.push(j);
                    queue.push(j);
                }
            }
        }
        if !touches_observed {
            return Err(Error::SingularSystem {
                node: *component.iter().min().expect("component is non-empty"),
                size: component.len(),
            });
        }
    }
    Ok(())
}

/// Dirichlet energy `sum_{(i,j) in E} w_ij * ||x_i - x_j||^2`, each
/// undirected edge counted once.
pub fn dirichlet_energy(features: &FeatureMatrix, adj: &NormalizedAdjacency) -> Result<f64> {
    check_dims(features, adj)?;
    Ok(energy_of_values(features.values(), adj))
}

fn energy_of_values(x: &Array2<f64>, adj: &NormalizedAdjacency) -> f64 {
    let mut total = 0.0;
    for i in 0..adj.num_nodes() {
        let (cols, weights) = adj.row(i);
        for (&j, &w) in cols.iter().zip(weights) {
            if i < j {
                let diff = &x.row(i) - &x.row(j);
                total += w * diff.dot(&diff);
            }
        }
    }
    total
}
