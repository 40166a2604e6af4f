//! Fine-tune-then-evaluate: the accuracy protocol run after federation.

use alloc::vec::Vec;

use crate::dataset::DatasetView;
use crate::partition::Partition;
use crate::streams::{self, tag};

use super::run::received_params;
use super::train::{local_train, DataTask, LocalTask};
use super::{Algorithm, FederationResult, FlError, TrainConfig};

/// Outcome of [`finetune_and_evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Unweighted mean accuracy over the evaluated clients.
    pub mean_accuracy: f64,
    /// (client_id, test accuracy), ascending by client.
    pub per_client: Vec<(usize, f64)>,
    /// Clients skipped because their test split is empty.
    pub excluded: Vec<usize>,
}

/// Evaluates the run: every client receives its model (the global one, its
/// cluster's, or its personal copy), fine-tunes it for
/// `cfg.finetune_epochs` (defaulting to `local_epochs`) on its own training
/// split, and reports accuracy on its held-out split. SOLO models are
/// already local, so they skip fine-tuning. Clients with an empty test
/// split are excluded and listed.
pub fn finetune_and_evaluate(
    result: &FederationResult,
    partition: &Partition,
    dataset: &DatasetView,
    cfg: &TrainConfig,
) -> Result<EvalReport, FlError> {
    cfg.validate()?;
    let n = result.client_states.len();
    if partition.num_clients() != n {
        return Err(FlError::PartitionMismatch);
    }
    let arch = result
        .global_models
        .first()
        .map(|m| m.architecture)
        .or_else(|| {
            result
                .client_states
                .iter()
                .find_map(|s| s.personalized.as_ref().map(|m| m.architecture))
        })
        .ok_or(FlError::BadConfig("federation result holds no models"))?;
    if arch.input_dim() != dataset.feature_dim() || arch.num_classes() != dataset.num_classes() {
        return Err(FlError::ArchitectureMismatch);
    }
    for (state, assigned) in result.client_states.iter().zip(&partition.client_indices) {
        let mut merged: Vec<usize> = state
            .train_indices
            .iter()
            .chain(&state.test_indices)
            .copied()
            .collect();
        merged.sort_unstable();
        if &merged != assigned {
            return Err(FlError::PartitionMismatch);
        }
    }

    let task = DataTask { arch, dataset };
    let models: Vec<Vec<f64>> = result.global_models.iter().map(|m| m.values.clone()).collect();
    let personalized: Vec<Option<Vec<f64>>> = result
        .client_states
        .iter()
        .map(|s| s.personalized.as_ref().map(|m| m.values.clone()))
        .collect();
    let cluster_ids: Vec<Option<usize>> =
        result.client_states.iter().map(|s| s.cluster_id).collect();
    let train: Vec<Vec<usize>> = result
        .client_states
        .iter()
        .map(|s| s.train_indices.clone())
        .collect();
    let shared_ranges = arch.layer_ranges();
    let epochs = cfg.finetune_epochs.unwrap_or(cfg.local_epochs);

    let mut per_client = Vec::new();
    let mut excluded = Vec::new();
    for (i, state) in result.client_states.iter().enumerate() {
        if state.test_indices.is_empty() {
            excluded.push(i);
            continue;
        }
        let mut params = received_params(
            result.algorithm,
            &task,
            i,
            &train,
            &models,
            &personalized,
            &cluster_ids,
            &shared_ranges,
        );
        let tune = result.algorithm != Algorithm::Solo && epochs > 0 && !train[i].is_empty();
        if tune {
            let mut rng = streams::derive_rng(cfg.seed, &[tag::FINETUNE, i as u64]);
            params = local_train(&task, i, &params, &train[i], epochs, None, None, cfg, &mut rng)?
                .params;
        }
        per_client.push((i, task.accuracy(i, &params, &state.test_indices)));
    }
    if per_client.is_empty() {
        return Err(FlError::NoTestData);
    }
    let mean_accuracy =
        per_client.iter().map(|&(_, a)| a).sum::<f64>() / per_client.len() as f64;
    Ok(EvalReport { mean_accuracy, per_client, excluded })
}

// ── Tests ───────────────────────────────────────────────────────────────
