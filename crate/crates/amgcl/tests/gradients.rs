//! Finite-difference verification of every primitive and of the full
//! composite objective.

use amgcl::gacls::ModelDims;
use amgcl::graph::SparseGraph;
use amgcl::selfcheck::{gradient_check, relative_error, GradCheckInstance};
use amgcl::tensor::{Activation, Tape, TensorId};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Checks `d loss / d input` for a scalar-valued builder against central
/// finite differences over every input entry.
fn check_unary<F>(name: &str, input: Array2<f64>, build: F)
where
    F: Fn(&mut Tape, TensorId) -> TensorId,
{
    let loss_at = |values: &Array2<f64>| -> f64 {
        let mut tape = Tape::new();
        let x = tape.param(values.clone());
        let loss = build(&mut tape, x);
        tape.scalar_value(loss)
    };
    let mut tape = Tape::new();
    let x = tape.param(input.clone());
    let loss = build(&mut tape, x);
    tape.backward(loss).unwrap();
    let analytic = tape.grad_or_zeros(x);
    for i in 0..input.nrows() {
        for j in 0..input.ncols() {
            let mut plus = input.clone();
            plus[[i, j]] += FD_STEP;
            let mut minus = input.clone();
            minus[[i, j]] -= FD_STEP;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_STEP);
            let err = relative_error(analytic[[i, j]], fd);
            assert!(
                err <= TOL,
                "{name}[{i},{j}]: analytic {} vs fd {fd} (rel {err:.2e})",
                analytic[[i, j]]
            );
        }
    }
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Sum of all entries as a scalar loss (mean_all scaled by the length).
fn sum_all(tape: &mut Tape, x: TensorId) -> TensorId {
    let len = tape.value(x).len() as f64;
    let mean = tape.mean_all(x);
    tape.scale(mean, len)
}

#[test]
fn matmul_gradients() {
    let a = random_matrix(4, 3, 1);
    let b = random_matrix(3, 5, 2);
    check_unary("matmul-left", a.clone(), |tape, x| {
        let rhs = tape.constant(b.clone());
        let prod = tape.matmul(x, rhs).unwrap();
        sum_all(tape, prod)
    });
    check_unary("matmul-right", b.clone(), |tape, x| {
        let lhs = tape.constant(a.clone());
        let prod = tape.matmul(lhs, x).unwrap();
        sum_all(tape, prod)
    });
}

#[test]
fn add_and_add_row_gradients() {
    let other = random_matrix(3, 4, 3);
    check_unary("add", random_matrix(3, 4, 4), |tape, x| {
        let rhs = tape.constant(other.clone());
        let sum = tape.add(x, rhs).unwrap();
        let sq = tape.mse(sum, x).unwrap(); // non-trivial combination
        let m = tape.mean_all(sum);
        tape.add(sq, m).unwrap()
    });
    check_unary("add_row-bias", random_matrix(1, 4, 5), |tape, bias| {
        let base = tape.constant(random_matrix(6, 4, 6));
        let out = tape.add_row(base, bias).unwrap();
        let sq = tape.relu(out);
        sum_all(tape, sq)
    });
}

#[test]
fn relu_gradient_away_from_kink() {
    // keep inputs away from 0 so finite differences are valid
    let mut input = random_matrix(4, 4, 7);
    input.mapv_inplace(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
    check_unary("relu", input, |tape, x| {
        let y = tape.relu(x);
        sum_all(tape, y)
    });
}

#[test]
fn dropout_gradient_uses_the_sampled_mask() {
    check_unary("dropout", random_matrix(5, 3, 8), |tape, x| {
        let y = tape.dropout(x, 0.4, 99, true).unwrap();
        sum_all(tape, y)
    });
}

#[test]
fn row_l2_normalize_gradient() {
    // rows have healthy norms so the normalization is smooth
    let mut input = random_matrix(4, 3, 9);
    input.mapv_inplace(|v| v + 0.5_f64.copysign(v));
    check_unary("row_l2_normalize", input, |tape, x| {
        let y = tape.row_l2_normalize(x);
        let w = tape.constant(random_matrix(4, 3, 10));
        let l = tape.mse(y, w).unwrap();
        tape.scale(l, 3.0)
    });
}

#[test]
fn concat_and_mse_gradients() {
    let right = random_matrix(4, 2, 11);
    check_unary("concat_cols", random_matrix(4, 3, 12), |tape, x| {
        let rhs = tape.constant(right.clone());
        let joined = tape.concat_cols(x, rhs).unwrap();
        let target = tape.constant(random_matrix(4, 5, 13));
        tape.mse(joined, target).unwrap()
    });
    check_unary("mse-target-side", random_matrix(4, 3, 14), |tape, x| {
        let pred = tape.constant(random_matrix(4, 3, 15));
        tape.mse(pred, x).unwrap()
    });
    check_unary("mse-row-subset", random_matrix(5, 3, 16), |tape, x| {
        let target = tape.constant(random_matrix(5, 3, 17));
        tape.mse_rows(x, target, Some(vec![0, 2, 4])).unwrap()
    });
}

#[test]
fn cosine_rowwise_gradients() {
    let other = random_matrix(4, 3, 18) + 0.3;
    check_unary("cosine-left", random_matrix(4, 3, 19) + 0.3, |tape, x| {
        let rhs = tape.constant(other.clone());
        let cos = tape.cosine_rowwise(x, rhs).unwrap();
        sum_all(tape, cos)
    });
    check_unary("cosine-right", random_matrix(4, 3, 20) + 0.3, |tape, x| {
        let lhs = tape.constant(other.clone());
        let cos = tape.cosine_rowwise(lhs, x).unwrap();
        sum_all(tape, cos)
    });
}

#[test]
fn spmm_and_gcn_layer_gradients() {
    let graph = SparseGraph::build(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], 4).unwrap();
    let adj = graph.normalized();
    check_unary("spmm", random_matrix(4, 3, 21), |tape, x| {
        let y = tape.spmm(&adj, x).unwrap();
        let t = tape.constant(random_matrix(4, 3, 22));
        tape.mse(y, t).unwrap()
    });
    let w = random_matrix(3, 2, 23);
    check_unary("gcn-layer-input", random_matrix(4, 3, 24), |tape, x| {
        let weight = tape.constant(w.clone());
        let y = tape.gcn_layer(&adj, x, weight, Activation::Relu).unwrap();
        sum_all(tape, y)
    });
    check_unary("gcn-layer-weight", w.clone(), |tape, weight| {
        let x = tape.constant(random_matrix(4, 3, 25));
        let y = tape.gcn_layer(&adj, x, weight, Activation::Relu).unwrap();
        sum_all(tape, y)
    });
}

#[test]
fn cross_entropy_gradient() {
    let labels = vec![0, 2, 1, 2];
    check_unary("cross_entropy", random_matrix(4, 3, 26), |tape, x| {
        tape.cross_entropy(x, &labels, &[0, 1, 3]).unwrap()
    });
}

#[test]
fn primitives_pass_fd_checks_on_randomized_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for trial in 0..6u64 {
        let rows = rng.gen_range(2..7);
        let inner = rng.gen_range(1..5);
        let cols = rng.gen_range(1..6);
        let seed = 1000 + trial * 10;

        let rhs = random_matrix(inner, cols, seed + 1);
        check_unary("matmul(rand)", random_matrix(rows, inner, seed), |tape, x| {
            let b = tape.constant(rhs.clone());
            let prod = tape.matmul(x, b).unwrap();
            let t = tape.constant(random_matrix(rows, cols, seed + 2));
            tape.mse(prod, t).unwrap()
        });

        let mut relu_in = random_matrix(rows, cols, seed + 3);
        relu_in.mapv_inplace(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
        check_unary("relu(rand)", relu_in, |tape, x| {
            let y = tape.relu(x);
            sum_all(tape, y)
        });

        let other = random_matrix(rows, cols, seed + 4) + 0.4;
        check_unary("cosine(rand)", random_matrix(rows, cols, seed + 5) + 0.4, |tape, x| {
            let b = tape.constant(other.clone());
            let cos = tape.cosine_rowwise(x, b).unwrap();
            sum_all(tape, cos)
        });

        let mut norm_in = random_matrix(rows, cols, seed + 6);
        norm_in.mapv_inplace(|v| v + 0.5_f64.copysign(v));
        check_unary("row_l2(rand)", norm_in, |tape, x| {
            let y = tape.row_l2_normalize(x);
            sum_all(tape, y)
        });
    }
}

#[test]
fn spmm_is_self_adjoint() {
    // <A x, y> == <x, A y> justifies reusing the operator in backward.
    let graph = SparseGraph::build(&[(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)], 4).unwrap();
    let adj = graph.normalized();
    let x = random_matrix(4, 3, 27);
    let y = random_matrix(4, 3, 28);
    let ax = adj.spmm_dense(&x).unwrap();
    let ay = adj.spmm_dense(&y).unwrap();
    let left: f64 = (&ax * &y).sum();
    let right: f64 = (&x * &ay).sum();
    assert!((left - right).abs() <= 1e-10, "{left} vs {right}");
}

#[test]
fn full_objective_exhaustive_at_small_dims() {
    let result = gradient_check(
        ModelDims {
            latent: 6,
            gen_hidden: 10,
        },
        3,
        usize::MAX,
    )
    .unwrap();
    assert!(
        result.max_rel_err <= TOL,
        "max rel err {:.3e}; per tensor: {:?}",
        result.max_rel_err,
        result.per_tensor
    );
    assert!(result.target_grads_zero);
}

#[test]
fn full_objective_with_symmetrized_contrastive_loss() {
    // the mirrored term doubles the encoder paths; gradients must still match
    let mut instance = GradCheckInstance::new(
        ModelDims {
            latent: 5,
            gen_hidden: 8,
        },
        9,
    )
    .unwrap();
    instance.cfg.symmetrize_fcl = true;
    let (analytic, target_zero) = instance.analytic_grads().unwrap();
    assert!(target_zero);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for (name, grad) in &analytic {
        for _ in 0..12 {
            let i = rng.gen_range(0..grad.nrows());
            let j = rng.gen_range(0..grad.ncols());
            let fd = instance.fd_entry(name, (i, j), FD_STEP).unwrap();
            let err = relative_error(grad[[i, j]], fd);
            assert!(err <= TOL, "{name}[{i},{j}] rel err {err:.3e}");
        }
    }
}
