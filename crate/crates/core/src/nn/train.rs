//! Training loop: mini-batch Adam over the relative-L2 loss.
//!
//! Everything is keyed by the config seed — initialization, batch order —
//! so a (config, dataset) pair fully determines the checkpoint.

use thiserror::Error;

use crate::nn::adam::{adam_step, AdamHyper, AdamState};
use crate::nn::dataset::TrainingSet;
use crate::nn::net::{backward, forward, forward_direct, loss_relative_l2_with_grad, NetError};
use crate::nn::params::NetParams;
use crate::rng::{shuffle, stream, CounterRng};
use crate::Rgb;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Per-photon kernel weights applied to physical contributions.
    Kernel,
    /// Radiance regressed directly from the pooled context (ablation).
    Direct,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub k: usize,
    pub head: Head,
    pub steps: u64,
    pub batch_size: usize,
    pub adam: AdamHyper<f64>,
    pub eps_rel: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(k: usize, head: Head, steps: u64, seed: u64) -> Self {
        Self {
            k,
            head,
            steps,
            batch_size: 8,
            adam: AdamHyper::default(),
            eps_rel: 0.01,
            seed,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("loss became non-finite at step {step}")]
    Diverged { step: u64 },
    #[error(transparent)]
    Net(#[from] NetError),
}

pub struct TrainOutput {
    pub params: NetParams<f64>,
    /// (step, window-averaged loss) every 100 steps, plus a final partial
    /// window when the step count is not a multiple of 100.
    pub loss_curve: Vec<(u64, f64)>,
}

/// Epoch-reshuffled index stream; batches may straddle epochs so every
/// batch has the configured size.
struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    seed: u64,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        Self { order: (0..n).collect(), pos: n, epoch: 0, seed }
    }

    fn next(&mut self) -> usize {
        if self.pos >= self.order.len() {
            let mut rng = CounterRng::from_stream(self.seed, &[stream::BATCH_SHUFFLE, self.epoch]);
            shuffle(&mut self.order, &mut rng);
            self.epoch += 1;
            self.pos = 0;
        }
        let ix = self.order[self.pos];
        self.pos += 1;
        ix
    }
}

pub fn train(cfg: &TrainConfig, data: &TrainingSet) -> Result<TrainOutput, TrainError> {
    if data.samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
    }
    if !(cfg.adam.lr > 0.0) {
        return Err(TrainError::BadConfig("lr must be positive".into()));
    }
    for (name, beta) in [("beta1", cfg.adam.beta1), ("beta2", cfg.adam.beta2)] {
        if !(0.0..1.0).contains(&beta) {
            return Err(TrainError::BadConfig(format!("{name} must lie in [0, 1)")));
        }
    }
    if !(cfg.eps_rel > 0.0) {
        return Err(TrainError::BadConfig("eps_rel must be positive".into()));
    }
    if data.k != cfg.k {
        return Err(TrainError::BadConfig(format!(
            "dataset built for K = {}, config says K = {}",
            data.k, cfg.k
        )));
    }

    let mut params = NetParams::he_uniform(cfg.seed);
    let mut state = AdamState::zeros();
    let mut grads = NetParams::zeros();
    let mut batches = BatchStream::new(data.samples.len(), cfg.seed);
    let mut curve = Vec::new();
    let mut window_sum = 0.0;
    let mut window_n = 0u64;

    for step in 1..=cfg.steps {
        grads.fill_zero();
        let inv_batch = 1.0 / cfg.batch_size as f64;
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let sample = &data.samples[batches.next()];
            let (lhat, cache) = match cfg.head {
                Head::Kernel => forward(&params, &sample.features, &sample.contributions, &sample.mask)?,
                Head::Direct => forward_direct(&params, &sample.features, &sample.mask)?,
            };
            let (loss, grad_lhat) = loss_relative_l2_with_grad(lhat, sample.l_ref, cfg.eps_rel);
            batch_loss += loss * inv_batch;
            backward(&params, &cache, grad_lhat * inv_batch, &mut grads);
        }
        if !batch_loss.is_finite() {
            return Err(TrainError::Diverged { step });
        }
        adam_step(&mut params, &grads, &mut state, &cfg.adam, step);

        window_sum += batch_loss;
        window_n += 1;
        if step % 100 == 0 {
            curve.push((step, window_sum / window_n as f64));
            window_sum = 0.0;
            window_n = 0;
        }
    }
    if window_n > 0 {
        curve.push((cfg.steps, window_sum / window_n as f64));
    }
    Ok(TrainOutput { params, loss_curve: curve })
}

/// Serialize a loss curve as two-column CSV.
pub fn loss_curve_to_csv(curve: &[(u64, f64)]) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in curve {
        out.push_str(&format!("{step},{loss}\n"));
    }
    out
}

/// Forward pass for one training sample under the configured head; shared
/// by evaluation code.
pub fn predict_sample(
    params: &NetParams<f64>,
    head: Head,
    features: &[f64],
    contributions: &[f64],
    mask: &[bool],
) -> Result<Rgb, NetError> {
    Ok(match head {
        Head::Kernel => forward(params, features, contributions, mask)?.0,
        Head::Direct => forward_direct(params, features, mask)?.0,
    })
}
