//! Dual-encoder contrastive training: online/target graph encoders, a
//! node-level predictor, an attribute generator, the two losses, EMA weight
//! transfer, and the full training loop.
//!
//! The online encoder is gradient-trained; the target encoder receives no
//! gradients and tracks the online weights by exponential moving average.
//! The generator decodes the concatenated embedding back into attribute
//! space, producing the imputed feature matrix.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_view, AugmentConfig};
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, NormalizedAdjacency, SparseGraph, Split};
use crate::ingest::Dataset;
use crate::precoder::{propagate, PrecoderConfig};
use crate::tensor::{glorot_uniform, Activation, AdamConfig, ParamSet, Tape, TensorId};
use crate::util::derive_seed;

/// Width of each encoder output.
pub const LATENT_DIM: usize = 128;
/// Width of the concatenated embedding fed to the generator.
pub const EMBED_DIM: usize = 2 * LATENT_DIM;
/// Hidden width of the generator perceptron.
pub const GENERATOR_HIDDEN: usize = 512;

/// Layer widths of the model. The defaults are the widths used for real
/// runs; tests shrink them to keep exhaustive checks affordable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub latent: usize,
    pub gen_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            latent: LATENT_DIM,
            gen_hidden: GENERATOR_HIDDEN,
        }
    }
}

impl ModelDims {
    pub fn embed(&self) -> usize {
        2 * self.latent
    }
}

const SALT_INIT: u64 = 0x11;
const SALT_AUG1: u64 = 0x21;
const SALT_AUG2: u64 = 0x22;

/// Training runs are capped at this epoch count (the evaluation protocol's
/// maximum, also the default).
pub const MAX_EPOCHS: usize = 1000;

/// Which loss drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Reconstruction plus weighted contrastive loss.
    Full,
    /// Contrastive loss only.
    Star,
}

impl Variant {
    /// Run label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "amgcl",
            Variant::Star => "amgcl*",
        }
    }
}

/// Which rows the reconstruction loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecTarget {
    All,
    Observed,
}

/// Training settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub ema_decay: f64,
    pub epochs: usize,
    pub lr: f64,
    pub aug1: AugmentConfig,
    pub aug2: AugmentConfig,
    pub seed: u64,
    pub symmetrize_fcl: bool,
    pub variant: Variant,
    pub rec_target: RecTarget,
}

impl TrainConfig {
    /// Defaults with all random streams derived from `seed`.
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            lambda: 1.0,
            ema_decay: 0.99,
            epochs: MAX_EPOCHS,
            lr: 0.001,
            aug1: AugmentConfig::new(0.25, 0.25, derive_seed(seed, SALT_AUG1)),
            aug2: AugmentConfig::new(0.25, 0.25, derive_seed(seed, SALT_AUG2)),
            seed,
            symmetrize_fcl: false,
            variant: Variant::Full,
            rec_target: RecTarget::All,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay = {} outside [0, 1]",
                self.ema_decay
            )));
        }
        if self.epochs > MAX_EPOCHS {
            return Err(Error::Config(format!(
                "epochs = {} exceeds the protocol maximum {MAX_EPOCHS}",
                self.epochs
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(0)
    }
}

/// Which encoder a forward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Online,
    Target,
}

/// Model parameters: gradient-trained tensors in a [`ParamSet`] plus the
/// EMA-tracked target encoder weights.
#[derive(Debug, Clone)]
pub struct GaclsModel {
    pub input_dim: usize,
    pub dims: ModelDims,
    pub trainable: ParamSet,
    pub target_w1: Array2<f64>,
    pub target_w2: Array2<f64>,
}

impl GaclsModel {
    /// Glorot-initialized model at the default widths; the target encoder
    /// starts as an exact copy of the online encoder.
    pub fn init(input_dim: usize, seed: u64) -> Self {
        Self::init_with_dims(input_dim, ModelDims::default(), seed)
    }

    pub fn init_with_dims(input_dim: usize, dims: ModelDims, seed: u64) -> Self {
        let s = |k: u64| derive_seed(seed, SALT_INIT + k);
        let latent = dims.latent;
        let mut trainable = ParamSet::new();
        trainable.insert("enc.w1", glorot_uniform(input_dim, latent, s(0)));
        trainable.insert("enc.w2", glorot_uniform(latent, latent, s(1)));
        trainable.insert("pred.w1", glorot_uniform(latent, latent, s(2)));
        trainable.insert("pred.b1", Array2::zeros((1, latent)));
        trainable.insert("pred.w2", glorot_uniform(latent, latent, s(3)));
        trainable.insert("pred.b2", Array2::zeros((1, latent)));
        trainable.insert("gen.w1", glorot_uniform(dims.embed(), dims.gen_hidden, s(4)));
        trainable.insert("gen.b1", Array2::zeros((1, dims.gen_hidden)));
        trainable.insert("gen.w2", glorot_uniform(dims.gen_hidden, input_dim, s(5)));
        trainable.insert("gen.b2", Array2::zeros((1, input_dim)));
        let target_w1 = trainable.get("enc.w1").clone();
        let target_w2 = trainable.get("enc.w2").clone();
        GaclsModel {
            input_dim,
            dims,
            trainable,
            target_w1,
            target_w2,
        }
    }

    /// Number of gradient-trained scalar parameters.
    pub fn param_count(&self) -> usize {
        self.trainable.num_scalars()
    }
}

/// Negative scaled mean row-wise cosine: `-(2/N) * sum_i cos(z1_i, h2_i)`.
pub fn fcl_loss(tape: &mut Tape, z1_pred: TensorId, h2_target: TensorId) -> Result<TensorId> {
    let cos = tape.cosine_rowwise(z1_pred, h2_target)?;
    let mean = tape.mean_all(cos);
    Ok(tape.scale(mean, -2.0))
}

/// Mean squared row error `(1/N) * sum_i ||x_i - xhat_i||^2`, optionally
/// restricted to (and averaged over) a row subset.
pub fn rec_loss(
    tape: &mut Tape,
    x_hat: TensorId,
    x: TensorId,
    rows: Option<Vec<usize>>,
) -> Result<TensorId> {
    tape.mse_rows(x_hat, x, rows)
}

/// EMA transfer onto the target encoder: `phi <- tau * phi + (1 - tau) * theta`.
/// Only encoder weights take part; predictor and generator are excluded.
pub fn ema_update(model: &mut GaclsModel, tau: f64) {
    let blend = |phi: &mut Array2<f64>, theta: &Array2<f64>| {
        phi.zip_mut_with(theta, |p, &t| *p = tau * *p + (1.0 - tau) * t);
    };
    let theta_w1 = model.trainable.get("enc.w1").clone();
    let theta_w2 = model.trainable.get("enc.w2").clone();
    blend(&mut model.target_w1, &theta_w1);
    blend(&mut model.target_w2, &theta_w2);
}

/// Ids of every leaf bound for one recorded step.
pub struct BoundParams {
    pub trainable: Vec<(String, TensorId)>,
    /// Target-encoder leaves, bound as constants (the stop-gradient).
    pub target: Vec<(String, TensorId)>,
}

/// One recorded forward pass of the full objective on a pair of views.
pub struct StepGraph {
    pub tape: Tape,
    pub loss: TensorId,
    pub rec: TensorId,
    pub fcl: TensorId,
    /// Generator output `xhat` (N x d).
    pub imputed: TensorId,
    /// Concatenated embedding (N x 2*latent).
    pub embedding: TensorId,
    /// Predictor output on the online representation (N x latent).
    pub predicted: TensorId,
    /// Predictor output of the mirrored term (views swapped); present only
    /// when the contrastive loss is symmetrized.
    pub predicted_swap: Option<TensorId>,
    pub params: BoundParams,
}

fn encoder_forward(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    x: TensorId,
    w1: TensorId,
    w2: TensorId,
) -> Result<TensorId> {
    let hidden = tape.gcn_layer(adj, x, w1, Activation::Relu)?;
    tape.gcn_layer(adj, hidden, w2, Activation::Identity)
}

fn perceptron_forward(
    tape: &mut Tape,
    x: TensorId,
    w1: TensorId,
    b1: TensorId,
    w2: TensorId,
    b2: TensorId,
) -> Result<TensorId> {
    let hidden = tape.affine(x, w1, b1)?;
    let hidden = tape.relu(hidden);
    tape.affine(hidden, w2, b2)
}

/// Records the full objective of one step on `tape`-fresh state:
/// encode both views, predict, concatenate, generate, and combine losses.
/// `rec_reference` is the reconstruction target (the precoded features).
pub fn build_step_graph(
    model: &GaclsModel,
    view1: (&Array2<f64>, &NormalizedAdjacency),
    view2: (&Array2<f64>, &NormalizedAdjacency),
    rec_reference: &Array2<f64>,
    rec_rows: Option<Vec<usize>>,
    cfg: &TrainConfig,
) -> Result<StepGraph> {
    let mut tape = Tape::new();
    let names = [
        "enc.w1", "enc.w2", "pred.w1", "pred.b1", "pred.w2", "pred.b2", "gen.w1", "gen.b1",
        "gen.w2", "gen.b2",
    ];
    let mut bound = BTreeMap::new();
    for name in names {
        bound.insert(name, tape.param(model.trainable.get(name).clone()));
    }
    let t_w1 = tape.constant(model.target_w1.clone());
    let t_w2 = tape.constant(model.target_w2.clone());

    let x1 = tape.constant(view1.0.clone());
    let x2 = tape.constant(view2.0.clone());
    let x_ref = tape.constant(rec_reference.clone());

    let h1 = encoder_forward(&mut tape, view1.1, x1, bound["enc.w1"], bound["enc.w2"])?;
    let h2 = encoder_forward(&mut tape, view2.1, x2, t_w1, t_w2)?;
    let z1 = perceptron_forward(
        &mut tape,
        h1,
        bound["pred.w1"],
        bound["pred.b1"],
        bound["pred.w2"],
        bound["pred.b2"],
    )?;

    let embedding = tape.concat_cols(h1, h2)?;
    let imputed = perceptron_forward(
        &mut tape,
        embedding,
        bound["gen.w1"],
        bound["gen.b1"],
        bound["gen.w2"],
        bound["gen.b2"],
    )?;

    let mut fcl = fcl_loss(&mut tape, z1, h2)?;
    let mut predicted_swap = None;
    if cfg.symmetrize_fcl {
        // Mirrored term with the views swapped: online-encode view 2,
        // target-encode view 1, and average the two losses.
        let h1_swap = encoder_forward(&mut tape, view2.1, x2, bound["enc.w1"], bound["enc.w2"])?;
        let h2_swap = encoder_forward(&mut tape, view1.1, x1, t_w1, t_w2)?;
        let z1_swap = perceptron_forward(
            &mut tape,
            h1_swap,
            bound["pred.w1"],
            bound["pred.b1"],
            bound["pred.w2"],
            bound["pred.b2"],
        )?;
        let mirrored = fcl_loss(&mut tape, z1_swap, h2_swap)?;
        let sum = tape.add(fcl, mirrored)?;
        fcl = tape.scale(sum, 0.5);
        predicted_swap = Some(z1_swap);
    }
    let rec = rec_loss(&mut tape, imputed, x_ref, rec_rows)?;
    let loss = match cfg.variant {
        Variant::Star => fcl,
        Variant::Full => {
            let weighted = tape.scale(fcl, cfg.lambda);
            tape.add(rec, weighted)?
        }
    };

    Ok(StepGraph {
        tape,
        loss,
        rec,
        fcl,
        imputed,
        embedding,
        predicted: z1,
        predicted_swap,
        params: BoundParams {
            trainable: names
                .iter()
                .map(|&n| (n.to_string(), bound[n]))
                .collect(),
            target: vec![("target.w1".into(), t_w1), ("target.w2".into(), t_w2)],
        },
    })
}

/// Representation of `features` under one encoder, outside any training step.
pub fn encode(
    model: &GaclsModel,
    features: &Array2<f64>,
    adj: &NormalizedAdjacency,
    which: EncoderKind,
) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let (w1, w2) = match which {
        EncoderKind::Online => (
            tape.constant(model.trainable.get("enc.w1").clone()),
            tape.constant(model.trainable.get("enc.w2").clone()),
        ),
        EncoderKind::Target => (
            tape.constant(model.target_w1.clone()),
            tape.constant(model.target_w2.clone()),
        ),
    };
    let x = tape.constant(features.clone());
    let h = encoder_forward(&mut tape, adj, x, w1, w2)?;
    Ok(tape.value(h).clone())
}

/// Loss values of one epoch.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub rec: f64,
    pub fcl: f64,
}

/// Everything a training run produces.
pub struct TrainOutput {
    pub model: GaclsModel,
    /// Generator output from the final clean forward pass.
    pub imputed: FeatureMatrix,
    /// Concatenated embedding from the final clean forward pass.
    pub embedding: Array2<f64>,
    /// Precoded features the run trained against.
    pub precoded: FeatureMatrix,
    pub history: Vec<EpochStats>,
    /// Wall time spent inside the epoch loop (excludes precoding and the
    /// final evaluation pass).
    pub epoch_loop_seconds: f64,
}

/// Runs the full training loop: precode once, then per epoch augment two
/// views, run the recorded objective, take an Adam step on the trainable
/// parameters and EMA-update the target encoder. A final deterministic
/// forward pass on the un-augmented graph produces the returned imputed
/// matrix and embedding.
pub fn train(
    dataset: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
    precfg: &PrecoderConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let masked = crate::ingest::apply_mask(dataset, split)?;
    let adj = dataset.graph.normalized();
    let precoded = propagate(&masked, &adj, precfg)?;
    train_on_precoded(&dataset.graph, &precoded, split, cfg)
}

/// Training loop on already-precoded features; exposed for callers that
/// precode separately (benchmarks, the CLI `precode` + `train` pipeline).
pub fn train_on_precoded(
    graph: &SparseGraph,
    precoded: &FeatureMatrix,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let adj = graph.normalized();
    let mut model = GaclsModel::init(precoded.dim(), cfg.seed);
    let adam = AdamConfig::with_lr(cfg.lr);
    let rec_rows = match cfg.rec_target {
        RecTarget::All => None,
        RecTarget::Observed => Some(split.train_observed().to_vec()),
    };
    let x_ref = precoded.values();

    let mut history = Vec::with_capacity(cfg.epochs);
    let loop_start = std::time::Instant::now();
    for epoch in 0..cfg.epochs {
        let aug1 = AugmentConfig {
            seed: derive_seed(cfg.aug1.seed, epoch as u64),
            ..cfg.aug1.clone()
        };
        let aug2 = AugmentConfig {
            seed: derive_seed(cfg.aug2.seed, epoch as u64),
            ..cfg.aug2.clone()
        };
        let (x1, g1) = augment_view(precoded, graph, &aug1)?;
        let (x2, g2) = augment_view(precoded, graph, &aug2)?;
        let (a1, a2) = (g1.normalized(), g2.normalized());

        let mut step = build_step_graph(
            &model,
            (x1.values(), &a1),
            (x2.values(), &a2),
            x_ref,
            rec_rows.clone(),
            cfg,
        )?;
        let loss = step.tape.scalar_value(step.loss);
        let rec = step.tape.scalar_value(step.rec);
        let fcl = step.tape.scalar_value(step.fcl);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, value: loss });
        }
        assert!(
            (-2.0 - 1e-9..=2.0 + 1e-9).contains(&fcl),
            "contrastive loss {fcl} escaped [-2, 2] at epoch {epoch}"
        );

        step.tape.backward(step.loss)?;
        let mut grads = BTreeMap::new();
        for (name, id) in &step.params.trainable {
            grads.insert(name.clone(), step.tape.grad_or_zeros(*id));
        }
        debug_assert!(step
            .params
            .target
            .iter()
            .all(|(_, id)| step.tape.grad(*id).is_none()));
        model.trainable.adam_step(&grads, &adam)?;
        ema_update(&mut model, cfg.ema_decay);
        history.push(EpochStats {
            epoch,
            loss,
            rec,
            fcl,
        });
    }
    let epoch_loop_seconds = loop_start.elapsed().as_secs_f64();

    // Clean evaluation pass: no augmentation, full adjacency.
    let final_step = build_step_graph(
        &model,
        (x_ref, &adj),
        (x_ref, &adj),
        x_ref,
        None,
        cfg,
    )?;
    let imputed_values = final_step.tape.value(final_step.imputed).clone();
    let embedding = final_step.tape.value(final_step.embedding).clone();
    let imputed = precoded.with_values(imputed_values)?;

    Ok(TrainOutput {
        model,
        imputed,
        embedding,
        precoded: precoded.clone(),
        history,
        epoch_loop_seconds,
    })
}

// ---- checkpoint format ------------------------------------------------------

const CHECKPOINT_HEADER: &str = "gacls-checkpoint v1";

/// Writes all model tensors plus the training config as a versioned text blob.
pub fn save_checkpoint<W: Write>(
    mut out: W,
    model: &GaclsModel,
    cfg: &TrainConfig,
) -> std::io::Result<()> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    writeln!(
        out,
        "config {}",
        serde_json::to_string(cfg).expect("config serializes")
    )?;
    let mut write_tensor = |name: &str, t: &Array2<f64>| -> std::io::Result<()> {
        writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols())?;
        for row in t.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join("\t"))?;
        }
        Ok(())
    };
    for name in model.trainable.names().collect::<Vec<_>>() {
        write_tensor(name, model.trainable.get(name))?;
    }
    write_tensor("target.w1", &model.target_w1)?;
    write_tensor("target.w2", &model.target_w2)?;
    Ok(())
}

/// Reads a checkpoint produced by [`save_checkpoint`].
pub fn load_checkpoint<R: std::io::Read>(reader: R) -> Result<(GaclsModel, TrainConfig)> {
    let mut lines = BufReader::new(reader).lines();
    let bad = |msg: &str| Error::Parse {
        path: "<checkpoint>".into(),
        line: 0,
        msg: msg.into(),
    };
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("<checkpoint>", e))?
        .ok_or_else(|| bad("empty checkpoint"))?;
    if header.trim() != CHECKPOINT_HEADER {
        return Err(bad(&format!("unsupported checkpoint header {header:?}")));
    }
    let config_line = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("<checkpoint>", e))?
        .ok_or_else(|| bad("missing config line"))?;
    let cfg: TrainConfig = config_line
        .strip_prefix("config ")
        .ok_or_else(|| bad("missing config prefix"))
        .and_then(|json| {
            serde_json::from_str(json).map_err(|e| bad(&format!("bad config json: {e}")))
        })?;

    let mut tensors: BTreeMap<String, Array2<f64>> = BTreeMap::new();
    let mut pending: Option<(String, usize, usize, Vec<f64>)> = None;
    for line in lines {
        let line = line.map_err(|e| Error::io("<checkpoint>", e))?;
        if let Some(rest) = line.strip_prefix("tensor ") {
            if let Some((name, rows, cols, data)) = pending.take() {
                tensors.insert(
                    name,
                    Array2::from_shape_vec((rows, cols), data)
                        .map_err(|e| bad(&format!("tensor shape: {e}")))?,
                );
            }
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or_else(|| bad("tensor missing name"))?;
            let rows = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("tensor missing rows"))?;
            let cols = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("tensor missing cols"))?;
            pending = Some((name.to_string(), rows, cols, Vec::with_capacity(rows * cols)));
        } else if let Some((_, _, _, data)) = pending.as_mut() {
            for field in line.split('\t') {
                data.push(
                    field
                        .parse()
                        .map_err(|e| bad(&format!("bad value {field:?}: {e}")))?,
                );
            }
        }
    }
    if let Some((name, rows, cols, data)) = pending.take() {
        tensors.insert(
            name,
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| bad(&format!("tensor shape: {e}")))?,
        );
    }

    let take = |tensors: &mut BTreeMap<String, Array2<f64>>, name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| bad(&format!("checkpoint missing tensor {name}")))
    };
    let target_w1 = take(&mut tensors, "target.w1")?;
    let target_w2 = take(&mut tensors, "target.w2")?;
    let (input_dim, latent) = match tensors.get("enc.w1") {
        Some(t) => (t.nrows(), t.ncols()),
        None => return Err(bad("checkpoint missing tensor enc.w1")),
    };
    let gen_hidden = match tensors.get("gen.w1") {
        Some(t) => t.ncols(),
        None => return Err(bad("checkpoint missing tensor gen.w1")),
    };
    let mut trainable = ParamSet::new();
    for (name, tensor) in tensors {
        trainable.insert(name, tensor);
    }
    Ok((
        GaclsModel {
            input_dim,
            dims: ModelDims { latent, gen_hidden },
            trainable,
            target_w1,
            target_w2,
        },
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseGraph;
    use ndarray::array;

    fn tiny_setup() -> (SparseGraph, FeatureMatrix, Split) {
        let graph = SparseGraph::build(
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)],
            5,
        )
        .unwrap();
        let features = FeatureMatrix::fully_observed(array![
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0]
        ]);
        let split = Split::new(vec![0, 2, 4], vec![1], vec![3], 7, 5, (1, 5)).unwrap();
        (graph, features, split)
    }

    #[test]
    fn fcl_loss_identical_rows_is_minus_two() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[0.3, 0.4], [1.0, -1.0]]);
        let b = tape.constant(array![[0.3, 0.4], [1.0, -1.0]]);
        let l = fcl_loss(&mut tape, a, b).unwrap();
        assert!((tape.scalar_value(l) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn fcl_loss_orthogonal_rows_is_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 0.0], [0.0, 2.0]]);
        let b = tape.constant(array![[0.0, 5.0], [3.0, 0.0]]);
        let l = fcl_loss(&mut tape, a, b).unwrap();
        assert_eq!(tape.scalar_value(l), 0.0);
    }

    #[test]
    fn fcl_loss_single_row_example() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 0.0]]);
        let b = tape.constant(array![[1.0, 1.0]]);
        let l = fcl_loss(&mut tape, a, b).unwrap();
        assert!((tape.scalar_value(l) + 1.4142135623730951).abs() < 1e-12);
    }

    #[test]
    fn rec_loss_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0, 2.0]]);
        let xhat = tape.constant(array![[0.0, 0.0]]);
        let l = rec_loss(&mut tape, xhat, x, None).unwrap();
        assert_eq!(tape.scalar_value(l), 5.0);

        // perfect reconstruction
        let l0 = rec_loss(&mut tape, x, x, None).unwrap();
        assert_eq!(tape.scalar_value(l0), 0.0);

        // doubling residuals quadruples the loss
        let x2 = tape.constant(array![[2.0, 4.0]]);
        let zero = tape.constant(array![[0.0, 0.0]]);
        let l2 = rec_loss(&mut tape, x2, zero, None).unwrap();
        assert_eq!(tape.scalar_value(l2), 20.0);
    }

    #[test]
    fn ema_update_boundaries() {
        let (graph, features, split) = tiny_setup();
        let _ = (graph, split);
        let mut model = GaclsModel::init(features.dim(), 3);
        let before = model.target_w1.clone();
        // move the online weights away from the target copy
        model
            .trainable
            .set("enc.w1", &before + 1.0)
            .unwrap();

        let mut m1 = model.clone();
        ema_update(&mut m1, 1.0);
        assert_eq!(m1.target_w1, before);

        let mut m0 = model.clone();
        ema_update(&mut m0, 0.0);
        assert_eq!(m0.target_w1, &before + 1.0);

        let mut mh = model.clone();
        ema_update(&mut mh, 0.5);
        let expected = (&before + &(&before + 1.0)) * 0.5;
        assert!(mh
            .target_w1
            .iter()
            .zip(expected.iter())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn star_variant_never_updates_generator_or_target() {
        let (graph, features, split) = tiny_setup();
        let mut cfg = TrainConfig::new(5);
        cfg.epochs = 3;
        cfg.variant = Variant::Star;
        cfg.ema_decay = 1.0;
        let before = GaclsModel::init(features.dim(), cfg.seed);
        let out = train_on_precoded(&graph, &features, &split, &cfg).unwrap();
        // generator receives no gradient from the contrastive loss
        assert_eq!(out.model.trainable.get("gen.w1"), before.trainable.get("gen.w1"));
        // tau = 1 freezes the target encoder
        assert_eq!(out.model.target_w1, before.target_w1);
        // the encoder does move
        assert_ne!(out.model.trainable.get("enc.w1"), before.trainable.get("enc.w1"));
    }

    #[test]
    fn lambda_zero_training_loss_equals_rec_loss() {
        let (graph, features, split) = tiny_setup();
        let mut cfg = TrainConfig::new(11);
        cfg.epochs = 4;
        cfg.lambda = 0.0;
        let out = train_on_precoded(&graph, &features, &split, &cfg).unwrap();
        for stats in &out.history {
            assert_eq!(stats.loss, stats.rec);
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (graph, features, split) = tiny_setup();
        let mut cfg = TrainConfig::new(21);
        cfg.epochs = 2;
        let a = train_on_precoded(&graph, &features, &split, &cfg).unwrap();
        let b = train_on_precoded(&graph, &features, &split, &cfg).unwrap();
        assert_eq!(a.imputed.values(), b.imputed.values());
        assert_eq!(a.embedding, b.embedding);
        for name in a.model.trainable.names() {
            assert_eq!(a.model.trainable.get(name), b.model.trainable.get(name));
        }
    }

    #[test]
    fn eval_forward_is_bitwise_reproducible() {
        let (graph, features, split) = tiny_setup();
        let mut cfg = TrainConfig::new(13);
        cfg.epochs = 2;
        let out = train_on_precoded(&graph, &features, &split, &cfg).unwrap();
        let adj = graph.normalized();
        let x = out.precoded.values();
        let s1 = build_step_graph(&out.model, (x, &adj), (x, &adj), x, None, &cfg).unwrap();
        let s2 = build_step_graph(&out.model, (x, &adj), (x, &adj), x, None, &cfg).unwrap();
        assert_eq!(s1.tape.value(s1.imputed), s2.tape.value(s2.imputed));
        assert_eq!(s1.tape.value(s1.embedding), s2.tape.value(s2.embedding));
    }

    #[test]
    fn tau_one_lambda_zero_degenerates_to_autoencoder() {
        // With tau = 1 and lambda = 0 the target never changes and only the
        // reconstruction path trains.
        let (graph, features, split) = tiny_setup();
        let mut cfg = TrainConfig::new(31);
        cfg.epochs = 6;
        cfg.lambda = 0.0;
        cfg.ema_decay = 1.0;
        let before = GaclsModel::init(features.dim(), cfg.seed);
        let out = train_on_precoded(&graph, &features, &split, &cfg).unwrap();
        assert_eq!(out.model.target_w1, before.target_w1);
        assert_eq!(out.model.target_w2, before.target_w2);
        // reconstruction loss goes down
        let first = out.history.first().unwrap().rec;
        let last = out.history.last().unwrap().rec;
        assert!(last < first, "rec loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn encode_zero_parameters_gives_zero_output() {
        let (graph, features, _) = tiny_setup();
        let mut model = GaclsModel::init(features.dim(), 0);
        model
            .trainable
            .set("enc.w1", Array2::zeros((features.dim(), LATENT_DIM)))
            .unwrap();
        model
            .trainable
            .set("enc.w2", Array2::zeros((LATENT_DIM, LATENT_DIM)))
            .unwrap();
        let h = encode(
            &model,
            features.values(),
            &graph.normalized(),
            EncoderKind::Online,
        )
        .unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_single_edge_matches_hand_forward() {
        // single unit edge, x = [[1],[0]], w1 = [[1]], w2 = [[3]]:
        // layer 1: relu(spmm(x)) = [[0],[1]]; layer 2: spmm(.) * 3 = [[3],[0]]
        let graph = SparseGraph::build(&[(0, 1)], 2).unwrap();
        let dims = ModelDims { latent: 1, gen_hidden: 2 };
        let mut model = GaclsModel::init_with_dims(1, dims, 0);
        model.trainable.set("enc.w1", array![[1.0]]).unwrap();
        model.trainable.set("enc.w2", array![[3.0]]).unwrap();
        let h = encode(
            &model,
            &array![[1.0], [0.0]],
            &graph.normalized(),
            EncoderKind::Online,
        )
        .unwrap();
        assert_eq!(h, array![[3.0], [0.0]]);
    }

    #[test]
    fn encode_no_edge_graph_is_zero_after_propagation() {
        let graph = SparseGraph::build(&[], 4).unwrap();
        let features = FeatureMatrix::fully_observed(Array2::ones((4, 3)));
        let model = GaclsModel::init(3, 9);
        let h = encode(
            &model,
            features.values(),
            &graph.normalized(),
            EncoderKind::Target,
        )
        .unwrap();
        // spmm over empty rows yields zeros, and the encoder has no bias terms
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epochs_above_the_protocol_maximum_are_rejected() {
        let (graph, features, split) = tiny_setup();
        let mut cfg = TrainConfig::new(1);
        cfg.epochs = MAX_EPOCHS + 1;
        match train_on_precoded(&graph, &features, &split, &cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("exceeds")),
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let model = GaclsModel::init(6, 17);
        let cfg = TrainConfig::new(17);
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model, &cfg).unwrap();
        let (loaded, loaded_cfg) = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(loaded.input_dim, 6);
        assert_eq!(loaded_cfg.seed, cfg.seed);
        for name in model.trainable.names() {
            assert_eq!(model.trainable.get(name), loaded.trainable.get(name));
        }
        assert_eq!(model.target_w1, loaded.target_w1);
        assert_eq!(model.target_w2, loaded.target_w2);
    }
}
