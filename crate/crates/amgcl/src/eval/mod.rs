//! Imputation metrics (Recall@k, NDCG@k), the node-classification probe,
//! scaling benchmarks and the serializable evaluation report.

mod bench;
mod probe;

pub use bench::{
    benchmark_scaling, scaling_exponents, synthetic_dataset, synthetic_features, synthetic_graph,
    BenchRow, BenchSize, ScalingExponent,
};
pub use probe::{classify_probe, ProbeConfig};

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_rank_inputs(scores: &ArrayView2<f64>, truth: &ArrayView2<f64>, k: usize) -> Result<()> {
    if scores.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "ranked_metrics",
            left: scores.shape().to_vec(),
            right: truth.shape().to_vec(),
        });
    }
    if k == 0 || k > scores.ncols() {
        return Err(Error::Invalid(format!(
            "k = {k} outside [1, {}]",
            scores.ncols()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("scores contain non-finite values".into()));
    }
    Ok(())
}

/// Column order of one score row: descending score, ties broken by the lower
/// column index.
fn ranked_columns(row: ArrayView2<f64>) -> Vec<usize> {
    debug_assert_eq!(row.nrows(), 1);
    let mut order: Vec<usize> = (0..row.ncols()).collect();
    order.sort_unstable_by(|&a, &b| {
        row[[0, b]]
            .partial_cmp(&row[[0, a]])
            .expect("scores checked finite")
            .then(a.cmp(&b))
    });
    order
}

/// Per-node `|top-k inter true| / |true|`, averaged over nodes with at least
/// one true attribute.
pub fn recall_at_k(scores: ArrayView2<f64>, truth: ArrayView2<f64>, k: usize) -> Result<f64> {
    let m = ranked_metrics(scores, truth, &[k])?;
    Ok(m.recall[&k])
}

/// Per-node binary-gain DCG@k normalized by the ideal DCG over
/// `min(k, |true|)` hits, averaged over nodes with at least one true
/// attribute.
pub fn ndcg_at_k(scores: ArrayView2<f64>, truth: ArrayView2<f64>, k: usize) -> Result<f64> {
    let m = ranked_metrics(scores, truth, &[k])?;
    Ok(m.ndcg[&k])
}

/// Recall@k and NDCG@k for several cutoffs in one ranking pass.
#[derive(Debug, Clone)]
pub struct RankedMetrics {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    /// Rows skipped because they have no true attribute.
    pub skipped_rows: usize,
    pub evaluated_rows: usize,
}

pub fn ranked_metrics(
    scores: ArrayView2<f64>,
    truth: ArrayView2<f64>,
    ks: &[usize],
) -> Result<RankedMetrics> {
    for &k in ks {
        check_rank_inputs(&scores, &truth, k)?;
    }
    if ks.is_empty() {
        return Err(Error::Invalid("no cutoffs requested".into()));
    }
    let max_k = *ks.iter().max().expect("non-empty");
    let mut recall_sum: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut ndcg_sum = recall_sum.clone();
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    // Discount table shared across rows: gain of a hit at rank r (1-based).
    let discount: Vec<f64> = (1..=max_k).map(|r| 1.0 / ((r + 1) as f64).log2()).collect();

    for (row_scores, row_truth) in scores.rows().into_iter().zip(truth.rows()) {
        let true_count = row_truth.iter().filter(|&&v| v != 0.0).count();
        if true_count == 0 {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let order = ranked_columns(row_scores.insert_axis(ndarray::Axis(0)));
        let mut hits_at = vec![0usize; max_k + 1];
        let mut dcg_at = vec![0.0f64; max_k + 1];
        for rank in 1..=max_k {
            let col = order[rank - 1];
            let hit = row_truth[col] != 0.0;
            hits_at[rank] = hits_at[rank - 1] + hit as usize;
            dcg_at[rank] = dcg_at[rank - 1] + if hit { discount[rank - 1] } else { 0.0 };
        }
        for &k in ks {
            *recall_sum.get_mut(&k).expect("initialized") +=
                hits_at[k] as f64 / true_count as f64;
            let ideal: f64 = discount[..k.min(true_count)].iter().sum();
            *ndcg_sum.get_mut(&k).expect("initialized") += dcg_at[k] / ideal;
        }
    }
    if evaluated == 0 {
        return Err(Error::Invalid(
            "every row was skipped: no true attributes to rank".into(),
        ));
    }
    let normalize = |sums: BTreeMap<usize, f64>| {
        sums.into_iter()
            .map(|(k, v)| (k, v / evaluated as f64))
            .collect()
    };
    Ok(RankedMetrics {
        recall: normalize(recall_sum),
        ndcg: normalize(ndcg_sum),
        skipped_rows: skipped,
        evaluated_rows: evaluated,
    })
}

/// Classification accuracy of one probe input path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeAccuracy {
    /// Which tensor fed the classifier (e.g. "embedding", "imputed").
    pub input: String,
    pub folds: Vec<f64>,
    pub mean: f64,
}

impl ProbeAccuracy {
    pub fn from_folds(input: impl Into<String>, folds: Vec<f64>) -> Self {
        let mean = if folds.is_empty() {
            0.0
        } else {
            folds.iter().sum::<f64>() / folds.len() as f64
        };
        ProbeAccuracy {
            input: input.into(),
            folds,
            mean,
        }
    }
}

/// Evaluation results with full run metadata; serialized as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Run label: "amgcl", "amgcl*" or "fp".
    pub method: String,
    pub dataset: String,
    pub recall_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    /// Test rows without any true attribute, skipped by the ranking metrics.
    pub skipped_rows: usize,
    /// Accuracy of the method's designated classification input.
    pub accuracy_folds: Vec<f64>,
    pub accuracy_mean: f64,
    /// Accuracy of any additional input paths (both output paths are probed).
    pub extra_classification: Vec<ProbeAccuracy>,
    /// The complete resolved configuration of the run.
    pub config_echo: serde_json::Value,
    pub seed: u64,
    pub wall_time_s: f64,
    pub param_count: usize,
}

impl EvalReport {
    pub const SCHEMA_VERSION: u32 = 1;

    /// Checks the report invariants: every metric lies in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let all_unit = self
            .recall_at
            .values()
            .chain(self.ndcg_at.values())
            .all(|&v| unit(v))
            && self.accuracy_folds.iter().all(|&v| unit(v))
            && self
                .extra_classification
                .iter()
                .flat_map(|p| p.folds.iter())
                .all(|&v| unit(v));
        if !all_unit {
            return Err(Error::Invalid("metric outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
