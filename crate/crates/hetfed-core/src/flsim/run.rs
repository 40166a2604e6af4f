//! The federation engine: client sampling, per-algorithm local passes, and
//! the server merge that closes each round.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::dataset::DatasetView;
use crate::partition::{sample_distinct, shuffle, Partition};
use crate::streams::{self, tag};

use super::model::{Architecture, ModelParams};
use super::train::{local_train, DataTask, LocalFit, LocalTask};
use super::{Algorithm, ClientState, FederationResult, FlError, RoundLog, TrainConfig};

/// Splits one client's assigned indices 80/20 into (train, test), both
/// ascending. The order is a seeded shuffle keyed on the partition seed and
/// client id, so the split is a pure function of the partition.
pub fn client_split(partition: &Partition, client: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order = partition.client_indices[client].clone();
    let mut rng = streams::derive_rng(partition.spec.seed, &[tag::SPLIT, client as u64]);
    shuffle(&mut order, &mut rng);
    let test_len = order.len() / 5;
    let mut test = order.split_off(order.len() - test_len);
    let mut train = order;
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Sample-count-weighted element-wise mean of the given models.
///
/// Each coordinate is computed as `anchor + Σ wᵢ·(yᵢ − anchor)` with the
/// anchor at the coordinate-wise minimum and the addends summed in sorted
/// order, which makes the result exactly invariant under permutations of
/// the update list and exactly idempotent on identical updates.
pub fn aggregate_fedavg(updates: &[(ModelParams, usize)]) -> Result<ModelParams, FlError> {
    let Some((first, _)) = updates.first() else {
        return Err(FlError::BadConfig("aggregate_fedavg needs at least one update"));
    };
    let arch = first.architecture;
    if updates.iter().any(|(m, _)| m.architecture != arch) {
        return Err(FlError::ArchitectureMismatch);
    }
    let total: usize = updates.iter().map(|&(_, n)| n).sum();
    if total == 0 {
        return Err(FlError::BadConfig("aggregate_fedavg needs a positive sample total"));
    }
    let dim = arch.param_count();
    let mut out = vec![0.0; dim];
    let mut terms = vec![0.0; updates.len()];
    for k in 0..dim {
        let anchor = updates
            .iter()
            .map(|(m, _)| m.values[k])
            .fold(f64::INFINITY, f64::min);
        for (t, (m, count)) in terms.iter_mut().zip(updates) {
            let w = *count as f64 / total as f64;
            *t = w * (m.values[k] - anchor);
        }
        terms.sort_unstable_by(f64::total_cmp);
        out[k] = anchor + terms.iter().sum::<f64>();
    }
    ModelParams::new(arch, out)
}

/// In-place merge `global += Σ wᵢ·κᵢ·(yᵢ − global)`, with the deltas taken
/// against the pre-merge value and accumulated in list order (callers pass
/// ascending client id). κ = 1 recovers the FedAvg step.
fn apply_weighted_updates(global: &mut [f64], updates: &[(&[f64], f64, f64)]) {
    for k in 0..global.len() {
        let base = global[k];
        let mut acc = 0.0;
        for (y, w, kappa) in updates {
            acc += w * kappa * (y[k] - base);
        }
        global[k] = base + acc;
    }
}

/// Cluster model with the lowest loss on `data`; ties take the lowest index.
fn best_cluster<T: LocalTask>(task: &T, client: usize, data: &[usize], models: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_loss = f64::INFINITY;
    for (j, m) in models.iter().enumerate() {
        let loss = task.loss(client, m, data);
        if loss < best_loss {
            best_loss = loss;
            best = j;
        }
    }
    best
}

fn compose_lg(personal: &[f64], global: &[f64], shared: &[Range<usize>]) -> Vec<f64> {
    let mut out = personal.to_vec();
    for r in shared {
        out[r.clone()].copy_from_slice(&global[r.clone()]);
    }
    out
}

/// Parameters the client would receive for evaluation right now.
pub(crate) fn received_params<T: LocalTask>(
    algorithm: Algorithm,
    task: &T,
    client: usize,
    train: &[Vec<usize>],
    models: &[Vec<f64>],
    personalized: &[Option<Vec<f64>>],
    cluster_ids: &[Option<usize>],
    shared_ranges: &[Range<usize>],
) -> Vec<f64> {
    match algorithm {
        Algorithm::FedAvg | Algorithm::FedProx | Algorithm::FedNova | Algorithm::Scaffold => {
            models[0].clone()
        }
        Algorithm::Lg => compose_lg(
            personalized[client].as_ref().expect("lg client holds a personal model"),
            &models[0],
            shared_ranges,
        ),
        Algorithm::Ifca => {
            // A client re-selects its best cluster at evaluation time, the
            // same rule it applies when training; with no data to compare
            // on it falls back to its last adoption.
            let j = if train[client].is_empty() {
                cluster_ids[client].unwrap_or(0)
            } else {
                best_cluster(task, client, &train[client], models)
            };
            models[j].clone()
        }
        Algorithm::Solo => personalized[client]
            .as_ref()
            .expect("solo client holds a personal model")
            .clone(),
    }
}

pub(crate) struct RawResult {
    pub models: Vec<Vec<f64>>,
    pub personalized: Vec<Option<Vec<f64>>>,
    pub control_variates: Vec<Option<Vec<f64>>>,
    pub server_control: Option<Vec<f64>>,
    pub cluster_ids: Vec<Option<usize>>,
    pub round_logs: Vec<RoundLog>,
}

/// Runs the federation schedule over an abstract task. `shared_ranges`
/// partitions the flat parameter vector into layers for LG; other
/// algorithms ignore it.
pub(crate) fn run_task<T: LocalTask>(
    algorithm: Algorithm,
    task: &T,
    layer_ranges: &[Range<usize>],
    train: &[Vec<usize>],
    test: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<RawResult, FlError> {
    cfg.validate()?;
    let n = train.len();
    if n == 0 || test.len() != n {
        return Err(FlError::BadConfig("need matching per-client train and test index lists"));
    }
    if algorithm == Algorithm::Lg && cfg.lg_local_layers >= layer_ranges.len() {
        return Err(FlError::BadConfig("lg_local_layers must leave at least one shared layer"));
    }
    let dim = task.param_dim();
    let shared_ranges: &[Range<usize>] = if algorithm == Algorithm::Lg {
        &layer_ranges[cfg.lg_local_layers..]
    } else {
        layer_ranges
    };

    let init = task.init_params(cfg.seed, 0);
    let mut models: Vec<Vec<f64>> = match algorithm {
        Algorithm::Ifca => (0..cfg.ifca_clusters)
            .map(|j| task.init_params(cfg.seed, j as u64))
            .collect(),
        Algorithm::Solo => Vec::new(),
        _ => vec![init.clone()],
    };
    let mut personalized: Vec<Option<Vec<f64>>> = match algorithm {
        Algorithm::Lg | Algorithm::Solo => (0..n).map(|_| Some(init.clone())).collect(),
        _ => vec![None; n],
    };
    let mut control: Vec<Option<Vec<f64>>> = if algorithm == Algorithm::Scaffold {
        (0..n).map(|_| Some(vec![0.0; dim])).collect()
    } else {
        vec![None; n]
    };
    let mut server_control = vec![0.0; dim];
    let mut cluster_ids: Vec<Option<usize>> = vec![None; n];
    let mut round_logs = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        // SOLO is purely local, so every client trains every round; the
        // other algorithms sample ⌈fraction·n⌉ without replacement.
        let selected: Vec<usize> = if algorithm == Algorithm::Solo {
            (0..n).collect()
        } else {
            let want = crate::fmath::ceil(cfg.client_fraction * n as f64) as usize;
            let pool: Vec<usize> = (0..n).collect();
            let mut rng = streams::derive_rng(cfg.seed, &[tag::CLIENT_SAMPLE, round as u64]);
            sample_distinct(&pool, want.clamp(1, n), &mut rng)
        };

        let mut fits: Vec<LocalFit> = Vec::with_capacity(selected.len());
        let mut adopted: Vec<usize> = Vec::with_capacity(selected.len());
        for &i in &selected {
            let start: Vec<f64> = match algorithm {
                Algorithm::Lg => compose_lg(
                    personalized[i].as_ref().expect("lg personal model"),
                    &models[0],
                    shared_ranges,
                ),
                Algorithm::Ifca => {
                    if train[i].is_empty() {
                        return Err(FlError::EmptyClientData { client: i });
                    }
                    let j = best_cluster(task, i, &train[i], &models);
                    adopted.push(j);
                    models[j].clone()
                }
                Algorithm::Solo => personalized[i].clone().expect("solo personal model"),
                _ => models[0].clone(),
            };
            let correction: Option<Vec<f64>> = control[i].as_ref().map(|ci| {
                ci.iter().zip(&server_control).map(|(a, b)| a - b).collect()
            });
            let anchor = if algorithm == Algorithm::FedProx {
                Some(models[0].as_slice())
            } else {
                None
            };
            let mut rng = streams::derive_rng(cfg.seed, &[tag::LOCAL_TRAIN, round as u64, i as u64]);
            let fit = local_train(
                task,
                i,
                &start,
                &train[i],
                cfg.local_epochs,
                anchor,
                correction.as_deref(),
                cfg,
                &mut rng,
            )?;
            fits.push(fit);
        }

        let total: usize = selected.iter().map(|&i| train[i].len()).sum();
        let weight = |i: usize| train[i].len() as f64 / total as f64;
        match algorithm {
            Algorithm::FedAvg | Algorithm::FedProx => {
                let updates: Vec<(&[f64], f64, f64)> = selected
                    .iter()
                    .zip(&fits)
                    .map(|(&i, fit)| (fit.params.as_slice(), weight(i), 1.0))
                    .collect();
                apply_weighted_updates(&mut models[0], &updates);
            }
            Algorithm::FedNova => {
                // τ_eff = Σ wᵢτᵢ as an exact integer ratio, so equal local
                // step counts give κ = 1 exactly.
                let tau_weighted: usize =
                    selected.iter().zip(&fits).map(|(&i, f)| train[i].len() * f.steps).sum();
                let tau_eff = tau_weighted as f64 / total as f64;
                let updates: Vec<(&[f64], f64, f64)> = selected
                    .iter()
                    .zip(&fits)
                    .map(|(&i, fit)| {
                        (fit.params.as_slice(), weight(i), tau_eff / fit.steps as f64)
                    })
                    .collect();
                apply_weighted_updates(&mut models[0], &updates);
            }
            Algorithm::Scaffold => {
                let x_before = models[0].clone();
                let updates: Vec<(&[f64], f64, f64)> = selected
                    .iter()
                    .zip(&fits)
                    .map(|(&i, fit)| (fit.params.as_slice(), weight(i), 1.0))
                    .collect();
                apply_weighted_updates(&mut models[0], &updates);
                // Control update: cᵢ ← cᵢ − c + (x − yᵢ)/(τᵢ·lr), then the
                // server folds in the sample-weighted mean of the deltas.
                // At lr = 0 the models cannot move, so the gradient
                // estimate term is defined as zero.
                let mut c_shift = vec![0.0; dim];
                for (&i, fit) in selected.iter().zip(&fits) {
                    let w = weight(i);
                    let scale = if cfg.learning_rate == 0.0 {
                        0.0
                    } else {
                        1.0 / (fit.steps as f64 * cfg.learning_rate)
                    };
                    let ci = control[i].as_mut().expect("scaffold control variate");
                    for k in 0..dim {
                        let grad_est = (x_before[k] - fit.params[k]) * scale;
                        let next = ci[k] - server_control[k] + grad_est;
                        c_shift[k] += w * (next - ci[k]);
                        ci[k] = next;
                    }
                }
                for k in 0..dim {
                    server_control[k] += c_shift[k];
                }
            }
            Algorithm::Lg => {
                for r in shared_ranges {
                    let updates: Vec<(&[f64], f64, f64)> = selected
                        .iter()
                        .zip(&fits)
                        .map(|(&i, fit)| (&fit.params[r.clone()], weight(i), 1.0))
                        .collect();
                    apply_weighted_updates(&mut models[0][r.clone()], &updates);
                }
                for (&i, fit) in selected.iter().zip(&fits) {
                    personalized[i] = Some(fit.params.clone());
                }
            }
            Algorithm::Ifca => {
                for j in 0..models.len() {
                    let members: Vec<usize> =
                        (0..selected.len()).filter(|&p| adopted[p] == j).collect();
                    if members.is_empty() {
                        continue;
                    }
                    let cluster_total: usize =
                        members.iter().map(|&p| train[selected[p]].len()).sum();
                    let updates: Vec<(&[f64], f64, f64)> = members
                        .iter()
                        .map(|&p| {
                            let w = train[selected[p]].len() as f64 / cluster_total as f64;
                            (fits[p].params.as_slice(), w, 1.0)
                        })
                        .collect();
                    apply_weighted_updates(&mut models[j], &updates);
                }
                for (p, &i) in selected.iter().enumerate() {
                    cluster_ids[i] = Some(adopted[p]);
                }
            }
            Algorithm::Solo => {
                for (&i, fit) in selected.iter().zip(&fits) {
                    personalized[i] = Some(fit.params.clone());
                }
            }
        }

        let train_loss: Vec<f64> = fits.iter().map(|f| f.avg_loss).collect();
        let local_test_acc: Vec<f64> = selected
            .iter()
            .zip(&fits)
            .map(|(&i, fit)| task.accuracy(i, &fit.params, &test[i]))
            .collect();
        let mut acc_sum = 0.0;
        let mut acc_count = 0usize;
        for i in 0..n {
            if test[i].is_empty() {
                continue;
            }
            let params = received_params(
                algorithm,
                task,
                i,
                train,
                &models,
                &personalized,
                &cluster_ids,
                shared_ranges,
            );
            acc_sum += task.accuracy(i, &params, &test[i]);
            acc_count += 1;
        }
        round_logs.push(RoundLog {
            round,
            selected,
            train_loss,
            local_test_acc,
            global_avg_acc: if acc_count == 0 { 0.0 } else { acc_sum / acc_count as f64 },
        });
    }

    Ok(RawResult {
        models,
        personalized,
        control_variates: control,
        server_control: (algorithm == Algorithm::Scaffold).then_some(server_control),
        cluster_ids,
        round_logs,
    })
}

/// Simulates `algorithm` over the partition's clients and returns the final
/// models, per-client states, and per-round logs. Each client trains on the
/// 80% side of its seeded split and reports accuracy on the held-out 20%.
pub fn run_federation(
    algorithm: Algorithm,
    arch: Architecture,
    partition: &Partition,
    dataset: &DatasetView,
    cfg: &TrainConfig,
) -> Result<FederationResult, FlError> {
    let n = partition.num_clients();
    if n == 0 {
        return Err(FlError::BadConfig("partition has no clients"));
    }
    if arch.input_dim() != dataset.feature_dim() || arch.num_classes() != dataset.num_classes() {
        return Err(FlError::ArchitectureMismatch);
    }
    if partition
        .client_indices
        .iter()
        .flatten()
        .any(|&i| i >= dataset.train_len())
    {
        return Err(FlError::PartitionMismatch);
    }
    let mut train = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(n);
    for i in 0..n {
        let (tr, te) = client_split(partition, i);
        train.push(tr);
        test.push(te);
    }
    let task = DataTask { arch, dataset };
    let raw = run_task(algorithm, &task, &arch.layer_ranges(), &train, &test, cfg)?;

    let global_models = raw
        .models
        .into_iter()
        .map(|values| ModelParams { architecture: arch, values })
        .collect();
    let mut personalized = raw.personalized;
    let mut control = raw.control_variates;
    let client_states = (0..n)
        .map(|i| ClientState {
            client_id: i,
            train_indices: core::mem::take(&mut train[i]),
            test_indices: core::mem::take(&mut test[i]),
            personalized: personalized[i]
                .take()
                .map(|values| ModelParams { architecture: arch, values }),
            control_variate: control[i].take(),
            cluster_id: raw.cluster_ids[i],
        })
        .collect();
    Ok(FederationResult {
        algorithm,
        global_models,
        client_states,
        server_control: raw.server_control,
        round_logs: raw.round_logs,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────
