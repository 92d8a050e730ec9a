//! Network parameter storage.
//!
//! All weights and biases live in one flat vector with a fixed layout, which
//! keeps the optimizer, checkpoints, and finite-difference checks trivial.
//! Weight matrices are stored input-major (transposed), so the forward pass
//! walks contiguous output rows.

use crate::math::Real;
use crate::rng::{stream, CounterRng};

/// Per-photon feature dimension.
pub const FEATURE_DIM: usize = 12;
/// Width of the encoder layers and of the pooled context vector.
pub const HIDDEN: usize = 64;
/// Kernel head input: per-row encoding concatenated with the context.
pub const HEAD_IN: usize = 2 * HIDDEN;
/// Output channels (one kernel weight per color channel).
pub const OUT: usize = 3;

/// Tensor table in declaration order: (name, in-dim, out-dim).
/// Biases are (len, 1).
pub const TENSORS: [(&str, usize, usize); 12] = [
    ("encoder1.weight", FEATURE_DIM, HIDDEN),
    ("encoder1.bias", HIDDEN, 1),
    ("encoder2.weight", HIDDEN, HIDDEN),
    ("encoder2.bias", HIDDEN, 1),
    ("kernel_head1.weight", HEAD_IN, HIDDEN),
    ("kernel_head1.bias", HIDDEN, 1),
    ("kernel_head2.weight", HIDDEN, OUT),
    ("kernel_head2.bias", OUT, 1),
    ("direct_head1.weight", HIDDEN, HIDDEN),
    ("direct_head1.bias", HIDDEN, 1),
    ("direct_head2.weight", HIDDEN, OUT),
    ("direct_head2.bias", OUT, 1),
];

pub const ENC1_W: usize = 0;
pub const ENC1_B: usize = 1;
pub const ENC2_W: usize = 2;
pub const ENC2_B: usize = 3;
pub const KER1_W: usize = 4;
pub const KER1_B: usize = 5;
pub const KER2_W: usize = 6;
pub const KER2_B: usize = 7;
pub const DIR1_W: usize = 8;
pub const DIR1_B: usize = 9;
pub const DIR2_W: usize = 10;
pub const DIR2_B: usize = 11;

pub const fn tensor_len(ix: usize) -> usize {
    TENSORS[ix].1 * TENSORS[ix].2
}

pub const fn tensor_offset(ix: usize) -> usize {
    let mut off = 0;
    let mut i = 0;
    while i < ix {
        off += tensor_len(i);
        i += 1;
    }
    off
}

/// Total parameter count:
/// 12*64+64 + 64*64+64 + 128*64+64 + 64*3+3 + 64*64+64 + 64*3+3.
pub const PARAM_COUNT: usize = tensor_offset(TENSORS.len() - 1) + tensor_len(TENSORS.len() - 1);

/// Flat parameter vector for the kernel-prediction network. The same
/// container holds gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<T> {
    values: Vec<T>,
}

impl<T: Real> NetParams<T> {
    pub fn zeros() -> Self {
        Self { values: vec![T::zero(); PARAM_COUNT] }
    }

    /// He-uniform initialization: weights uniform over
    /// [-sqrt(6/fan_in), sqrt(6/fan_in)], biases zero. Each tensor draws
    /// from its own (seed, tensor index) stream.
    pub fn he_uniform(seed: u64) -> Self {
        let mut params = Self::zeros();
        for ix in [ENC1_W, ENC2_W, KER1_W, KER2_W, DIR1_W, DIR2_W] {
            let fan_in = TENSORS[ix].1;
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut rng = CounterRng::from_stream(seed, &[stream::NET_INIT, ix as u64]);
            for v in params.tensor_mut(ix) {
                *v = T::of((rng.next_f64() * 2.0 - 1.0) * limit);
            }
        }
        params
    }

    pub fn from_values(values: Vec<T>) -> Option<Self> {
        (values.len() == PARAM_COUNT).then_some(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn tensor(&self, ix: usize) -> &[T] {
        let off = tensor_offset(ix);
        &self.values[off..off + tensor_len(ix)]
    }

    pub fn tensor_mut(&mut self, ix: usize) -> &mut [T] {
        let off = tensor_offset(ix);
        &mut self.values[off..off + tensor_len(ix)]
    }

    /// Mutable weight and bias slices of one layer (the bias follows its
    /// weight in the layout).
    pub fn wb_mut(&mut self, w_ix: usize) -> (&mut [T], &mut [T]) {
        let w_off = tensor_offset(w_ix);
        let w_len = tensor_len(w_ix);
        let b_len = tensor_len(w_ix + 1);
        let rest = &mut self.values[w_off..w_off + w_len + b_len];
        rest.split_at_mut(w_len)
    }

    pub fn fill_zero(&mut self) {
        self.values.fill(T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_layer_arithmetic() {
        let expected =
            12 * 64 + 64 + 64 * 64 + 64 + 128 * 64 + 64 + 64 * 3 + 3 + 64 * 64 + 64 + 64 * 3 + 3;
        assert_eq!(PARAM_COUNT, expected);
        assert_eq!(PARAM_COUNT, 17_798);
    }

    #[test]
    fn tensor_slices_tile_the_vector() {
        let params: NetParams<f64> = NetParams::zeros();
        let mut covered = 0;
        for ix in 0..TENSORS.len() {
            assert_eq!(tensor_offset(ix), covered);
            covered += params.tensor(ix).len();
        }
        assert_eq!(covered, PARAM_COUNT);
    }

    #[test]
    fn he_uniform_is_deterministic_and_bounded() {
        let a: NetParams<f64> = NetParams::he_uniform(7);
        let b: NetParams<f64> = NetParams::he_uniform(7);
        let c: NetParams<f64> = NetParams::he_uniform(8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 12.0).sqrt();
        for &v in a.tensor(ENC1_W) {
            assert!(v.abs() <= limit);
        }
        for &v in a.tensor(ENC1_B) {
            assert_eq!(v, 0.0);
        }
    }
}
