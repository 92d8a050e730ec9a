//! Adam with bias correction, over the flat parameter vector.

use crate::math::Real;
use crate::nn::params::NetParams;

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Default for AdamHyper<T> {
    fn default() -> Self {
        Self {
            lr: T::of(1e-3),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: NetParams<T>,
    pub v: NetParams<T>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros() -> Self {
        Self { m: NetParams::zeros(), v: NetParams::zeros() }
    }
}

/// One Adam update; `step_index` starts at 1 for the first step.
pub fn adam_step<T: Real>(
    params: &mut NetParams<T>,
    grads: &NetParams<T>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper<T>,
    step_index: u64,
) {
    debug_assert!(step_index >= 1);
    let b1 = hyper.beta1;
    let b2 = hyper.beta2;
    let bias1 = T::one() - b1.powi(step_index as i32);
    let bias2 = T::one() - b2.powi(step_index as i32);
    let theta = params.values_mut();
    let g = grads.values();
    let m = state.m.values_mut();
    let v = state.v.values_mut();
    for i in 0..theta.len() {
        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        theta[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params: NetParams<f64> = NetParams::he_uniform(1);
        let before = params.clone();
        let grads = NetParams::zeros();
        let mut state = AdamState::zeros();
        adam_step(&mut params, &grads, &mut state, &AdamHyper::default(), 1);
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // theta=0, g=1, lr=1e-3, defaults: m=0.1, v=0.001, m_hat=1, v_hat=1,
        // theta' = -1e-3 / (1 + 1e-8).
        let mut params: NetParams<f64> = NetParams::zeros();
        let mut grads = NetParams::zeros();
        grads.values_mut()[0] = 1.0;
        let mut state = AdamState::zeros();
        adam_step(&mut params, &grads, &mut state, &AdamHyper::default(), 1);
        let expect = -1e-3 / (1.0 + 1e-8);
        assert!((params.values()[0] - expect).abs() < 1e-15);
        assert!((params.values()[0] - (-9.999_999_9e-4)).abs() < 1e-11);
        assert!((state.m.values()[0] - 0.1).abs() < 1e-16);
        assert!((state.v.values()[0] - 0.001).abs() < 1e-16);
        // Untouched coordinates stay put.
        assert_eq!(params.values()[1], 0.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params: NetParams<f64> = NetParams::he_uniform(4);
            let mut grads = NetParams::zeros();
            for (i, g) in grads.values_mut().iter_mut().enumerate() {
                *g = ((i % 13) as f64 - 6.0) * 0.01;
            }
            let mut state = AdamState::zeros();
            for step in 1..=25 {
                adam_step(&mut params, &grads, &mut state, &AdamHyper::default(), step);
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn works_in_f32() {
        let mut params: NetParams<f32> = NetParams::zeros();
        let mut grads = NetParams::zeros();
        grads.values_mut()[5] = 2.0f32;
        let mut state = AdamState::zeros();
        adam_step(&mut params, &grads, &mut state, &AdamHyper::default(), 1);
        assert!(params.values()[5] < 0.0);
    }
}
