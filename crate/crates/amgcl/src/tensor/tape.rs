//! Dense-tensor computation tape with recorded reverse-mode differentiation.
//!
//! Every forward primitive appends a node to the tape; [`Tape::backward`]
//! traverses the nodes in exact reverse creation order and accumulates
//! gradients into leaf tensors. All values are `f64` and two-dimensional
//! (scalars are 1x1, per-row results are Nx1).

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

/// Activation applied by [`Tape::gcn_layer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Relu(usize),
    Dropout { input: usize, mask: Array2<f64> },
    RowL2Normalize(usize),
    ConcatCols(usize, usize),
    Spmm { adj: NormalizedAdjacency, input: usize },
    Mse { pred: usize, target: usize, rows: Option<Vec<usize>> },
    CosineRowwise(usize, usize),
    MeanAll(usize),
    Scale { input: usize, factor: f64 },
    CrossEntropy { logits: usize, labels: Vec<usize>, rows: Vec<usize> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph.
///
/// A tape is built for one forward pass, consumed by one `backward` call and
/// then dropped; tapes are not shared across threads.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Array2<f64>>>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            grad_enabled: true,
        }
    }

    /// Runs `f` with gradient recording disabled: nodes created inside are
    /// treated as constants by `backward`.
    pub fn no_grad<R>(&mut self, f: impl FnOnce(&mut Tape) -> R) -> R {
        let saved = self.grad_enabled;
        self.grad_enabled = false;
        let out = f(self);
        self.grad_enabled = saved;
        out
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> TensorId {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced by a forward op"
        );
        let requires_grad = requires_grad && self.grad_enabled;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        TensorId(self.nodes.len() - 1)
    }

    /// Trainable leaf: gradients are accumulated here during `backward`.
    pub fn param(&mut self, value: Array2<f64>) -> TensorId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Array2<f64>) -> TensorId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: TensorId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 tensor.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        let v = &self.nodes[id.0].value;
        assert_eq!(v.shape(), &[1, 1], "scalar_value on non-scalar tensor");
        v[[0, 0]]
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient accumulated at a leaf by the last `backward` call, if any.
    pub fn grad(&self, id: TensorId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient at a leaf, or zeros when no gradient flowed there.
    pub fn grad_or_zeros(&self, id: TensorId) -> Array2<f64> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.nodes[id.0].value.raw_dim()),
        }
    }

    fn require_grad_of(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn shape_err(&self, op: &'static str, a: TensorId, b: TensorId) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.nodes[a.0].value.shape().to_vec(),
            right: self.nodes[b.0].value.shape().to_vec(),
        }
    }

    // ---- forward primitives -------------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.ncols() != vb.nrows() {
            return Err(self.shape_err("matmul", a, b));
        }
        let value = parallel_matmul(va, vb);
        let rg = self.require_grad_of(&[a.0, b.0]);
        Ok(self.push(value, Op::Matmul(a.0, b.0), rg))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(self.shape_err("add", a, b));
        }
        let value = va + vb;
        let rg = self.require_grad_of(&[a.0, b.0]);
        Ok(self.push(value, Op::Add(a.0, b.0), rg))
    }

    /// Broadcast-adds a 1xM bias row to every row of an NxM tensor.
    pub fn add_row(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (vx, vb) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if vb.nrows() != 1 || vx.ncols() != vb.ncols() {
            return Err(self.shape_err("add_row", x, bias));
        }
        let value = vx + &vb.row(0);
        let rg = self.require_grad_of(&[x.0, bias.0]);
        Ok(self.push(value, Op::AddRow(x.0, bias.0), rg))
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let value = self.nodes[x.0].value.mapv(|v| v.max(0.0));
        let rg = self.require_grad_of(&[x.0]);
        self.push(value, Op::Relu(x.0), rg)
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-rate)` so the
    /// expectation is unchanged. With `train == false` or `rate == 0` this is
    /// the identity and no node is recorded.
    pub fn dropout(&mut self, x: TensorId, rate: f64, seed: u64, train: bool) -> Result<TensorId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = 1.0 / (1.0 - rate);
        let mask = Array2::from_shape_fn(self.nodes[x.0].value.raw_dim(), |_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        });
        let value = &self.nodes[x.0].value * &mask;
        let rg = self.require_grad_of(&[x.0]);
        Ok(self.push(value, Op::Dropout { input: x.0, mask }, rg))
    }

    /// Scales every nonzero row to unit Euclidean norm; zero rows stay zero.
    pub fn row_l2_normalize(&mut self, x: TensorId) -> TensorId {
        let vx = &self.nodes[x.0].value;
        let mut value = vx.clone();
        for mut row in value.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        let rg = self.require_grad_of(&[x.0]);
        self.push(value, Op::RowL2Normalize(x.0), rg)
    }

    /// Concatenates two tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.nrows() != vb.nrows() {
            return Err(self.shape_err("concat_cols", a, b));
        }
        let value = ndarray::concatenate(Axis(1), &[va.view(), vb.view()])
            .expect("row counts checked above");
        let rg = self.require_grad_of(&[a.0, b.0]);
        Ok(self.push(value, Op::ConcatCols(a.0, b.0), rg))
    }

    /// Sparse-times-dense propagation. The operator is symmetric, so the
    /// backward rule multiplies the upstream gradient by the same operator.
    pub fn spmm(&mut self, adj: &NormalizedAdjacency, x: TensorId) -> Result<TensorId> {
        let value = adj.spmm_dense(&self.nodes[x.0].value)?;
        let rg = self.require_grad_of(&[x.0]);
        Ok(self.push(
            value,
            Op::Spmm {
                adj: adj.clone(),
                input: x.0,
            },
            rg,
        ))
    }

    /// Mean over rows of the squared row-error: `(1/R) * sum_i ||a_i - b_i||^2`,
    /// where the sum ranges over `rows` (all rows when `None`).
    pub fn mse(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        self.mse_rows(pred, target, None)
    }

    pub fn mse_rows(
        &mut self,
        pred: TensorId,
        target: TensorId,
        rows: Option<Vec<usize>>,
    ) -> Result<TensorId> {
        let (vp, vt) = (&self.nodes[pred.0].value, &self.nodes[target.0].value);
        if vp.shape() != vt.shape() {
            return Err(self.shape_err("mse", pred, target));
        }
        if let Some(rows) = &rows {
            if rows.is_empty() {
                return Err(Error::Invalid("mse over an empty row set".into()));
            }
            if let Some(&bad) = rows.iter().find(|&&r| r >= vp.nrows()) {
                return Err(Error::Invalid(format!(
                    "mse row {bad} outside [0, {})",
                    vp.nrows()
                )));
            }
        }
        let total: f64 = match &rows {
            None => (vp - vt).mapv(|d| d * d).sum(),
            Some(rows) => rows
                .iter()
                .map(|&i| {
                    let diff = &vp.row(i) - &vt.row(i);
                    diff.dot(&diff)
                })
                .sum(),
        };
        let count = rows.as_ref().map_or(vp.nrows(), |r| r.len());
        let value = Array2::from_elem((1, 1), total / count as f64);
        let rg = self.require_grad_of(&[pred.0, target.0]);
        Ok(self.push(
            value,
            Op::Mse {
                pred: pred.0,
                target: target.0,
                rows,
            },
            rg,
        ))
    }

    /// Per-row cosine similarity as an Nx1 tensor. A row where either side has
    /// zero norm yields cosine 0 and contributes no gradient.
    pub fn cosine_rowwise(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(self.shape_err("cosine_rowwise", a, b));
        }
        let n = va.nrows();
        let mut value = Array2::zeros((n, 1));
        for i in 0..n {
            let (ra, rb) = (va.row(i), vb.row(i));
            let na = ra.dot(&ra).sqrt();
            let nb = rb.dot(&rb).sqrt();
            if na > 0.0 && nb > 0.0 {
                value[[i, 0]] = ra.dot(&rb) / (na * nb);
            }
        }
        let rg = self.require_grad_of(&[a.0, b.0]);
        Ok(self.push(value, Op::CosineRowwise(a.0, b.0), rg))
    }

    /// Mean over all entries, as a 1x1 tensor.
    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        let vx = &self.nodes[x.0].value;
        let value = Array2::from_elem((1, 1), vx.sum() / vx.len() as f64);
        let rg = self.require_grad_of(&[x.0]);
        self.push(value, Op::MeanAll(x.0), rg)
    }

    pub fn scale(&mut self, x: TensorId, factor: f64) -> TensorId {
        let value = &self.nodes[x.0].value * factor;
        let rg = self.require_grad_of(&[x.0]);
        self.push(value, Op::Scale { input: x.0, factor }, rg)
    }

    /// Softmax cross-entropy averaged over `rows`, with integer class labels
    /// indexed per row of `logits`.
    pub fn cross_entropy(
        &mut self,
        logits: TensorId,
        labels: &[usize],
        rows: &[usize],
    ) -> Result<TensorId> {
        let vl = &self.nodes[logits.0].value;
        if labels.len() != vl.nrows() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: vl.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if rows.is_empty() {
            return Err(Error::Invalid("cross_entropy over an empty row set".into()));
        }
        let classes = vl.ncols();
        let mut total = 0.0;
        for &i in rows {
            if i >= vl.nrows() || labels[i] >= classes {
                return Err(Error::Invalid(format!(
                    "cross_entropy row {i} or label out of range"
                )));
            }
            let row = vl.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        let value = Array2::from_elem((1, 1), total / rows.len() as f64);
        let rg = self.require_grad_of(&[logits.0]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                labels: labels.to_vec(),
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    // ---- composite layers ---------------------------------------------------

    /// Graph convolution: `activation(spmm(adj, x) . w)`.
    pub fn gcn_layer(
        &mut self,
        adj: &NormalizedAdjacency,
        x: TensorId,
        w: TensorId,
        activation: Activation,
    ) -> Result<TensorId> {
        let propagated = self.spmm(adj, x)?;
        let pre = self.matmul(propagated, w)?;
        Ok(match activation {
            Activation::Identity => pre,
            Activation::Relu => self.relu(pre),
        })
    }

    /// Affine map `x . w + bias`.
    pub fn affine(&mut self, x: TensorId, w: TensorId, bias: TensorId) -> Result<TensorId> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, bias)
    }

    // ---- backward -----------------------------------------------------------

    /// Reverse-mode gradient evaluation from a scalar loss. Gradients are
    /// accumulated at leaves; leaves the loss does not depend on keep a zero
    /// gradient (reported by [`Tape::grad_or_zeros`]).
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].value.shape() != [1, 1] {
            return Err(Error::Invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for slot in &mut self.grads {
            *slot = None;
        }
        self.grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad || self.grads[idx].is_none() {
                continue;
            }
            let g = self.grads[idx].take().expect("checked above");
            for (input, delta) in self.input_grads(idx, &g) {
                self.accum(input, delta);
            }
            // Leaf gradients stay queryable; interior gradients are dropped
            // as soon as they have been propagated.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                self.grads[idx] = Some(g);
            }
        }
        Ok(())
    }

    fn accum(&mut self, id: usize, delta: Array2<f64>) {
        match &mut self.grads[id] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradient contributions of node `idx` to its inputs. Input indices are
    /// always strictly smaller than `idx` (topological order). Inputs that do
    /// not require gradients are omitted.
    fn input_grads(&self, idx: usize, g: &Array2<f64>) -> Vec<(usize, Array2<f64>)> {
        let mut out: Vec<(usize, Array2<f64>)> = Vec::with_capacity(2);
        let mut emit = |id: usize, delta: Array2<f64>| {
            if self.nodes[id].requires_grad {
                out.push((id, delta));
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::Matmul(a, b) => {
                let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                if self.nodes[a].requires_grad {
                    emit(a, parallel_matmul(g, &vb.t().to_owned()));
                }
                if self.nodes[b].requires_grad {
                    emit(b, parallel_matmul(&va.t().to_owned(), g));
                }
            }
            &Op::Add(a, b) => {
                emit(a, g.clone());
                emit(b, g.clone());
            }
            &Op::AddRow(x, bias) => {
                emit(x, g.clone());
                emit(bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            &Op::Relu(x) => {
                let out_val = &self.nodes[idx].value;
                emit(x, g * &out_val.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
            }
            Op::Dropout { input, mask } => {
                emit(*input, g * mask);
            }
            &Op::RowL2Normalize(x) => {
                let vx = &self.nodes[x].value;
                let out_val = &self.nodes[idx].value;
                let mut gx = Array2::zeros(vx.raw_dim());
                for i in 0..vx.nrows() {
                    let row = vx.row(i);
                    let norm = row.dot(&row).sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let y = out_val.row(i);
                    let gi = g.row(i);
                    let coeff = gi.dot(&y);
                    let mut target = gx.row_mut(i);
                    for (t, (gv, yv)) in target.iter_mut().zip(gi.iter().zip(y.iter())) {
                        *t = (gv - coeff * yv) / norm;
                    }
                }
                emit(x, gx);
            }
            &Op::ConcatCols(a, b) => {
                let split = self.nodes[a].value.ncols();
                emit(a, g.slice(s![.., ..split]).to_owned());
                emit(b, g.slice(s![.., split..]).to_owned());
            }
            Op::Spmm { adj, input } => {
                let gx = adj
                    .spmm_dense(g)
                    .expect("shapes validated at forward time");
                emit(*input, gx);
            }
            Op::Mse { pred, target, rows } => {
                let (vp, vt) = (&self.nodes[*pred].value, &self.nodes[*target].value);
                let s = g[[0, 0]];
                let gp = match rows {
                    None => (vp - vt) * (2.0 * s / vp.nrows() as f64),
                    Some(rows) => {
                        let coeff = 2.0 * s / rows.len() as f64;
                        let mut gp = Array2::zeros(vp.raw_dim());
                        for &i in rows {
                            let diff = (&vp.row(i) - &vt.row(i)) * coeff;
                            gp.row_mut(i).assign(&diff);
                        }
                        gp
                    }
                };
                if self.nodes[*target].requires_grad {
                    emit(*target, gp.mapv(|v| -v));
                }
                emit(*pred, gp);
            }
            &Op::CosineRowwise(a, b) => {
                let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                let out_val = &self.nodes[idx].value;
                let mut ga = Array2::zeros(va.raw_dim());
                let mut gb = Array2::zeros(vb.raw_dim());
                for i in 0..va.nrows() {
                    let (ra, rb) = (va.row(i), vb.row(i));
                    let na = ra.dot(&ra).sqrt();
                    let nb = rb.dot(&rb).sqrt();
                    if na == 0.0 || nb == 0.0 {
                        continue;
                    }
                    let c = out_val[[i, 0]];
                    let gi = g[[i, 0]];
                    let mut ta = ga.row_mut(i);
                    for (t, (&av, &bv)) in ta.iter_mut().zip(ra.iter().zip(rb.iter())) {
                        *t = gi * (bv / (na * nb) - c * av / (na * na));
                    }
                    let mut tb = gb.row_mut(i);
                    for (t, (&av, &bv)) in tb.iter_mut().zip(ra.iter().zip(rb.iter())) {
                        *t = gi * (av / (na * nb) - c * bv / (nb * nb));
                    }
                }
                emit(a, ga);
                emit(b, gb);
            }
            &Op::MeanAll(x) => {
                let vx = &self.nodes[x].value;
                emit(
                    x,
                    Array2::from_elem(vx.raw_dim(), g[[0, 0]] / vx.len() as f64),
                );
            }
            &Op::Scale { input, factor } => {
                emit(input, g * factor);
            }
            Op::CrossEntropy {
                logits,
                labels,
                rows,
            } => {
                let vl = &self.nodes[*logits].value;
                let s = g[[0, 0]] / rows.len() as f64;
                let mut gl = Array2::zeros(vl.raw_dim());
                for &i in rows {
                    let row = vl.row(i);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                    let mut target = gl.row_mut(i);
                    for (k, t) in target.iter_mut().enumerate() {
                        let p = (row[k] - max).exp() / denom;
                        let y = if k == labels[i] { 1.0 } else { 0.0 };
                        *t = s * (p - y);
                    }
                }
                emit(*logits, gl);
            }
        }
        out
    }
}

/// Dense matmul split over fixed-size row blocks of the left operand. Each
/// block is an independent single-threaded product, so the result does not
/// depend on how many threads execute the blocks.
pub(crate) fn parallel_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    use ndarray::linalg::general_mat_mul;
    use rayon::prelude::*;

    const BLOCK: usize = 256;
    let (n, m) = (a.nrows(), b.ncols());
    let mut out = Array2::<f64>::zeros((n, m));
    if n <= BLOCK {
        general_mat_mul(1.0, a, b, 0.0, &mut out);
        return out;
    }
    let a_blocks: Vec<_> = a.axis_chunks_iter(Axis(0), BLOCK).collect();
    out.axis_chunks_iter_mut(Axis(0), BLOCK)
        .into_iter()
        .zip(a_blocks)
        .par_bridge()
        .for_each(|(mut out_block, a_block)| {
            general_mat_mul(1.0, &a_block, b, 0.0, &mut out_block);
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[-1.0, 2.0]]);
        let y = tape.relu(x);
        assert_eq!(tape.value(y), &array![[0.0, 2.0]]);
    }

    #[test]
    fn row_l2_normalize_forward() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[3.0, 4.0]]);
        let y = tape.row_l2_normalize(x);
        let v = tape.value(y);
        assert!((v[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((v[[0, 1]] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn row_l2_normalize_output_rows_have_unit_norm() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let x = Array2::from_shape_fn((16, 5), |_| rng.gen_range(-2.0..2.0));
        let mut tape = Tape::new();
        let id = tape.constant(x);
        let y = tape.row_l2_normalize(id);
        for row in tape.value(y).rows() {
            let norm = row.dot(&row).sqrt();
            assert!((norm - 1.0).abs() <= 1e-12, "norm {norm}");
        }
    }

    #[test]
    fn row_l2_normalize_zero_row_stays_zero() {
        let mut tape = Tape::new();
        let x = tape.param(array![[0.0, 0.0], [1.0, 0.0]]);
        let y = tape.row_l2_normalize(x);
        assert_eq!(tape.value(y).row(0).to_vec(), vec![0.0, 0.0]);
        let m = tape.mean_all(y);
        tape.backward(m).unwrap();
        let g = tape.grad(x).unwrap();
        assert_eq!(g.row(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn cosine_rowwise_forward() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 0.0]]);
        let b = tape.constant(array![[1.0, 1.0]]);
        let c = tape.cosine_rowwise(a, b).unwrap();
        assert!((tape.value(c)[[0, 0]] - 0.7071067811865475).abs() < 1e-12);
    }

    #[test]
    fn mse_forward_matches_row_mean() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 2.0]]);
        let b = tape.constant(array![[0.0, 0.0]]);
        let l = tape.mse(a, b).unwrap();
        assert_eq!(tape.scalar_value(l), 5.0);
    }

    #[test]
    fn quadratic_gradient_is_two_w() {
        let mut tape = Tape::new();
        let w = tape.param(array![[1.0, -2.0, 3.0]]);
        let zero = tape.constant(array![[0.0, 0.0, 0.0]]);
        let l = tape.mse(w, zero).unwrap();
        tape.backward(l).unwrap();
        let g = tape.grad(w).unwrap();
        assert_eq!(g, &array![[2.0, -4.0, 6.0]]);
    }

    #[test]
    fn identical_inputs_give_zero_mse_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0], [3.0, 4.0]]);
        let l = tape.mse(x, x).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.scalar_value(l), 0.0);
        let g = tape.grad(x).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_grad_blocks_backward_flow() {
        let mut tape = Tape::new();
        let w = tape.param(array![[2.0]]);
        let frozen = tape.no_grad(|t| {
            let c = t.constant(array![[3.0]]);
            t.matmul(w, c).unwrap()
        });
        assert!(!tape.requires_grad(frozen));
        let target = tape.constant(array![[0.0]]);
        let l = tape.mse(frozen, target).unwrap();
        tape.backward(l).unwrap();
        assert!(tape.grad(w).is_none());
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0]]);
        let y = tape.dropout(x, 0.0, 42, true).unwrap();
        assert_eq!(x, y);
        let z = tape.dropout(x, 0.9, 42, false).unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn dropout_scales_kept_entries() {
        let mut tape = Tape::new();
        let x = tape.constant(Array2::ones((4, 8)));
        let y = tape.dropout(x, 0.5, 7, true).unwrap();
        for &v in tape.value(y) {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-15);
        }
        // deterministic given seed
        let mut tape2 = Tape::new();
        let x2 = tape2.constant(Array2::ones((4, 8)));
        let y2 = tape2.dropout(x2, 0.5, 7, true).unwrap();
        assert_eq!(tape.value(y), tape2.value(y2));
    }

    #[test]
    fn concat_cols_splits_gradient() {
        let mut tape = Tape::new();
        let a = tape.param(array![[1.0, 2.0]]);
        let b = tape.param(array![[3.0]]);
        let c = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.value(c), &array![[1.0, 2.0, 3.0]]);
        let m = tape.mean_all(c);
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &array![[1.0 / 3.0, 1.0 / 3.0]]);
        assert_eq!(tape.grad(b).unwrap(), &array![[1.0 / 3.0]]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0]]);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn gcn_layer_on_path_matches_hand_forward() {
        // path 0-1-2 with w = 1/sqrt(2); x = [[0],[1],[0]], W = [[2]]:
        // relu(spmm(x) . W) = [[sqrt(2)], [0], [sqrt(2)]]
        let g = crate::graph::SparseGraph::build(&[(0, 1), (1, 2)], 3).unwrap();
        let adj = g.normalized();
        let mut tape = Tape::new();
        let x = tape.constant(array![[0.0], [1.0], [0.0]]);
        let w = tape.constant(array![[2.0]]);
        let y = tape.gcn_layer(&adj, x, w, Activation::Relu).unwrap();
        let v = tape.value(y);
        assert!((v[[0, 0]] - 1.4142135623730951).abs() < 1e-12);
        assert_eq!(v[[1, 0]], 0.0);
        assert!((v[[2, 0]] - 1.4142135623730951).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn overflowing_forward_is_caught_in_debug() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1e200]]);
        let b = tape.constant(array![[1e200]]);
        let _ = tape.matmul(a, b);
    }

    #[test]
    fn parallel_matmul_matches_dot() {
        let n = 700;
        let a = Array2::from_shape_fn((n, 31), |(i, j)| ((i * 31 + j) % 17) as f64 - 8.0);
        let b = Array2::from_shape_fn((31, 13), |(i, j)| ((i * 13 + j) % 5) as f64 * 0.5);
        let ours = parallel_matmul(&a, &b);
        let reference = a.dot(&b);
        assert_eq!(ours, reference);
    }
}
