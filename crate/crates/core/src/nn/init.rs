//! Deterministic parameter initialization.
//!
//! Weights use scaled-uniform (Glorot) init in `±sqrt(6 / (fan_in + fan_out))`;
//! biases start at zero. All draws come from a caller-seeded ChaCha stream so
//! the same seed always produces the same parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

pub type InitRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> InitRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut InitRng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape")
}

/// Glorot for a `[rows, cols]` matrix applied as `W x` (fan_in = cols).
pub fn glorot_matrix(rows: usize, cols: usize, rng: &mut InitRng) -> Tensor {
    glorot(&[rows, cols], cols, rows, rng)
}

/// Glorot for conv kernels `[c_out, c_in, k1, k2]`.
pub fn glorot_conv(c_out: usize, c_in: usize, k1: usize, k2: usize, rng: &mut InitRng) -> Tensor {
    let fan_in = c_in * k1 * k2;
    let fan_out = c_out * k1 * k2;
    glorot(&[c_out, c_in, k1, k2], fan_in, fan_out, rng)
}

pub fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape)
}
