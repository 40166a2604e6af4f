//! Deterministic federated-learning simulation.
//!
//! Seven algorithms share one engine: a round selects clients, each runs
//! local SGD from the model it would receive, and the server folds the
//! results back in ascending client-id order. All randomness flows through
//! per-purpose streams keyed on (seed, round, client), so a run is a pure
//! function of its configuration and any two algorithms that prescribe the
//! same arithmetic produce bit-identical trajectories.

mod eval;
mod model;
mod run;
mod train;

pub use eval::{finetune_and_evaluate, EvalReport};
pub use model::{batch_loss_and_gradient, Architecture, ModelParams};
pub use run::{aggregate_fedavg, client_split, run_federation};

pub(crate) use model::logits as model_logits;

use alloc::vec::Vec;

/// Federation algorithm to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    FedAvg,
    FedProx,
    FedNova,
    Scaffold,
    Lg,
    Ifca,
    Solo,
}

impl Algorithm {
    pub const ALL: [Self; 7] = [
        Self::FedAvg,
        Self::FedProx,
        Self::FedNova,
        Self::Scaffold,
        Self::Lg,
        Self::Ifca,
        Self::Solo,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Self::FedAvg => "FEDAVG",
            Self::FedProx => "FEDPROX",
            Self::FedNova => "FEDNOVA",
            Self::Scaffold => "SCAFFOLD",
            Self::Lg => "LG",
            Self::Ifca => "IFCA",
            Self::Solo => "SOLO",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FEDAVG" => Some(Self::FedAvg),
            "FEDPROX" => Some(Self::FedProx),
            "FEDNOVA" => Some(Self::FedNova),
            "SCAFFOLD" => Some(Self::Scaffold),
            "LG" => Some(Self::Lg),
            "IFCA" => Some(Self::Ifca),
            "SOLO" => Some(Self::Solo),
            _ => None,
        }
    }
}

/// Simulation failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlError {
    /// A configuration field is out of range; the message names it.
    BadConfig(&'static str),
    /// Parameter vector length does not match the architecture, or models
    /// with different architectures were mixed.
    ArchitectureMismatch,
    /// A client was asked to train on an empty index set.
    EmptyClientData { client: usize },
    /// Parameters left the finite range during training.
    Diverged,
    /// Partition indices do not fit the dataset.
    PartitionMismatch,
    /// Every client's test split is empty, so no accuracy is defined.
    NoTestData,
}

impl core::fmt::Display for FlError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::BadConfig(what) => write!(f, "bad federation config: {what}"),
            Self::ArchitectureMismatch => write!(f, "model parameters do not match architecture"),
            Self::EmptyClientData { client } => {
                write!(f, "client {client} has no training samples")
            }
            Self::Diverged => write!(f, "training diverged to non-finite parameters"),
            Self::PartitionMismatch => write!(f, "partition does not fit the dataset"),
            Self::NoTestData => write!(f, "no client has a non-empty test split"),
        }
    }
}

impl core::error::Error for FlError {}

/// Hyper-parameters for local training and the federation schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    /// Fraction of clients sampled per round, in (0, 1].
    pub client_fraction: f64,
    /// Proximal pull toward the round's global model; only FEDPROX reads it.
    pub mu: f64,
    /// Number of cluster models; only IFCA reads it.
    pub ifca_clusters: usize,
    /// Leading layers kept client-local; only LG reads it.
    pub lg_local_layers: usize,
    /// Fine-tuning epochs for evaluation; `None` reuses `local_epochs`.
    pub finetune_epochs: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FlError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(FlError::BadConfig("learning_rate must be finite and >= 0"));
        }
        if !(self.momentum >= 0.0) || !(self.momentum < 1.0) {
            return Err(FlError::BadConfig("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(FlError::BadConfig("weight_decay must be finite and >= 0"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(FlError::BadConfig("mu must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(FlError::BadConfig("batch_size must be >= 1"));
        }
        if self.local_epochs == 0 {
            return Err(FlError::BadConfig("local_epochs must be >= 1"));
        }
        if self.rounds == 0 {
            return Err(FlError::BadConfig("rounds must be >= 1"));
        }
        if !(self.client_fraction > 0.0) || !(self.client_fraction <= 1.0) {
            return Err(FlError::BadConfig("client_fraction must lie in (0, 1]"));
        }
        if self.ifca_clusters == 0 {
            return Err(FlError::BadConfig("ifca_clusters must be >= 1"));
        }
        Ok(())
    }
}

/// Per-client record carried out of a federation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    /// Indices the client trained on (the 80% side of its split).
    pub train_indices: Vec<usize>,
    /// Held-out indices used for local evaluation (the 20% side).
    pub test_indices: Vec<usize>,
    /// Client-held model, kept by LG and SOLO.
    pub personalized: Option<ModelParams>,
    /// SCAFFOLD client control variate.
    pub control_variate: Option<Vec<f64>>,
    /// Cluster the client last adopted under IFCA.
    pub cluster_id: Option<usize>,
}

/// One communication round's record. `train_loss` and `local_test_acc` run
/// parallel to `selected`; a client with an empty test split reports 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub selected: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub local_test_acc: Vec<f64>,
    /// Mean accuracy of the model each client would currently receive,
    /// over every client with a non-empty test split.
    pub global_avg_acc: f64,
}

/// Everything a federation run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationResult {
    pub algorithm: Algorithm,
    /// Server-side models: one for most algorithms, `ifca_clusters` for
    /// IFCA, none for SOLO.
    pub global_models: Vec<ModelParams>,
    pub client_states: Vec<ClientState>,
    /// SCAFFOLD's server control variate.
    pub server_control: Option<Vec<f64>>,
    pub round_logs: Vec<RoundLog>,
}
