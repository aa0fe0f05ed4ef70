//! Minimal dense-tensor engine: a recorded computation tape with reverse-mode
//! differentiation, the layers the model needs, and an Adam optimizer.

mod adam;
mod tape;

pub use adam::{AdamConfig, ParamSet};
pub use tape::{Activation, Tape, TensorId};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Glorot/Xavier uniform initialization for a `rows x cols` weight tensor.
pub fn glorot_uniform(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}
