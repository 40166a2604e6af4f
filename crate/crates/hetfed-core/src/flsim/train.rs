//! Local SGD: the per-client optimization step shared by every federation
//! algorithm and by fine-tuning.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;

use crate::dataset::DatasetView;
use crate::partition::shuffle;

use super::model::{self, Architecture};
use super::{FlError, TrainConfig};

/// A client-local objective the trainer can descend. Implemented by the
/// dataset-backed task below; tests add synthetic objectives to probe
/// optimizer behavior in closed form.
pub(crate) trait LocalTask {
    fn param_dim(&self) -> usize;

    /// Fresh parameters for model `model_index` under `seed`.
    fn init_params(&self, seed: u64, model_index: u64) -> Vec<f64>;

    /// Mean loss over `batch`, with the mean gradient added into `grad`
    /// (zeroed by the caller). `client` lets synthetic tasks vary the
    /// objective per client; the dataset task keys everything off `batch`.
    fn loss_grad(&self, client: usize, params: &[f64], batch: &[usize], grad: &mut [f64]) -> f64;

    /// Mean loss over `batch` without the gradient.
    fn loss(&self, client: usize, params: &[f64], batch: &[usize]) -> f64 {
        let mut scratch = vec![0.0; self.param_dim()];
        self.loss_grad(client, params, batch, &mut scratch)
    }

    /// Classification accuracy on `indices`; synthetic tasks report 0.
    fn accuracy(&self, client: usize, params: &[f64], indices: &[usize]) -> f64;
}

/// Cross-entropy classification on a shared dataset; batches carry global
/// sample indices.
pub(crate) struct DataTask<'a> {
    pub arch: Architecture,
    pub dataset: &'a DatasetView,
}

impl LocalTask for DataTask<'_> {
    fn param_dim(&self) -> usize {
        self.arch.param_count()
    }

    fn init_params(&self, seed: u64, model_index: u64) -> Vec<f64> {
        self.arch.init(seed, model_index).values
    }

    fn loss_grad(&self, _client: usize, params: &[f64], batch: &[usize], grad: &mut [f64]) -> f64 {
        model::batch_loss_grad(
            &self.arch,
            params,
            self.dataset.train_features(),
            self.dataset.train_labels(),
            batch,
            Some(grad),
        )
    }

    fn loss(&self, _client: usize, params: &[f64], batch: &[usize]) -> f64 {
        model::batch_loss_grad(
            &self.arch,
            params,
            self.dataset.train_features(),
            self.dataset.train_labels(),
            batch,
            None,
        )
    }

    fn accuracy(&self, _client: usize, params: &[f64], indices: &[usize]) -> f64 {
        model::accuracy(
            &self.arch,
            params,
            self.dataset.train_features(),
            self.dataset.train_labels(),
            indices,
        )
    }
}

/// Outcome of one client's local pass.
#[derive(Debug)]
pub(crate) struct LocalFit {
    pub params: Vec<f64>,
    /// SGD steps taken (batches seen across all epochs).
    pub steps: usize,
    /// Mean per-batch training loss across the pass.
    pub avg_loss: f64,
}

/// Runs `epochs` of mini-batch SGD from `start` on the client's samples.
///
/// Each epoch reshuffles `data` from `rng` and walks it in batches of
/// `cfg.batch_size`, keeping a short final batch. The descent direction per
/// batch is the task gradient plus `weight_decay`·w, plus the proximal pull
/// `mu`·(w − anchor) when `mu` is non-zero, minus `correction` when given.
/// A momentum buffer (fresh per call) accumulates it before the step.
pub(crate) fn local_train<T: LocalTask>(
    task: &T,
    client: usize,
    start: &[f64],
    data: &[usize],
    epochs: usize,
    prox_anchor: Option<&[f64]>,
    correction: Option<&[f64]>,
    cfg: &TrainConfig,
    rng: &mut ChaCha12Rng,
) -> Result<LocalFit, FlError> {
    if data.is_empty() {
        return Err(FlError::EmptyClientData { client });
    }
    let dim = task.param_dim();
    let mut w = start.to_vec();
    let mut velocity = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut order: Vec<usize> = data.to_vec();
    let mut steps = 0usize;
    let mut loss_sum = 0.0;

    for _ in 0..epochs {
        shuffle(&mut order, rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            loss_sum += task.loss_grad(client, &w, batch, &mut grad);
            for k in 0..dim {
                let mut g = grad[k] + cfg.weight_decay * w[k];
                if cfg.mu != 0.0 {
                    if let Some(anchor) = prox_anchor {
                        g += cfg.mu * (w[k] - anchor[k]);
                    }
                }
                if let Some(c) = correction {
                    g -= c[k];
                }
                velocity[k] = cfg.momentum * velocity[k] + g;
                w[k] -= cfg.learning_rate * velocity[k];
            }
            steps += 1;
        }
    }

    if w.iter().any(|v| !v.is_finite()) {
        return Err(FlError::Diverged);
    }
    let avg_loss = if steps == 0 { 0.0 } else { loss_sum / steps as f64 };
    Ok(LocalFit { params: w, steps, avg_loss })
}

// ── Tests ───────────────────────────────────────────────────────────────
