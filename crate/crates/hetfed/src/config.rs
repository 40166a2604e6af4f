//! The TOML experiment configuration.
//!
//! One file pins a full experiment: datasets, signature rank, clustering
//! threshold, partition method, federation hyper-parameters, and the output
//! directory. Every random choice downstream derives from the single
//! top-level seed, so a config file identifies an experiment exactly.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hetfed_core::clustering::Linkage;
use hetfed_core::flsim::{Algorithm, TrainConfig};
use hetfed_core::partition::PartitionMethod;
use serde::Deserialize;

/// Environment variable naming the directory that relative dataset paths
/// resolve against when the config does not set `data_root`.
pub const DATA_DIR_VAR: &str = "HETFED_DATA_DIR";

// ── Sections ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    pub format: DatasetFormat,
    /// Data files, resolved against the data root when relative. CIFAR
    /// batches list every file; IDX and CSV name their files directly.
    #[serde(default)]
    pub paths: Vec<String>,
    /// IDX label file (the image file goes in `paths`).
    pub label_path: Option<String>,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Height, width, channels; required by the CSV format.
    pub image_shape: Option<[usize; 3]>,
    /// Zero-pad and channel-replicate to 32x32x3 after loading.
    #[serde(default)]
    pub common_dim: bool,
    /// Synthetic generator parameters, read when `format = "synth"`.
    #[serde(default = "default_synth_clusters")]
    pub clusters: usize,
    #[serde(default = "default_synth_classes")]
    pub classes_per_cluster: usize,
    #[serde(default = "default_synth_samples")]
    pub samples_per_class: usize,
    #[serde(default = "default_synth_dim")]
    pub ambient_dim: usize,
    #[serde(default = "default_within_angle")]
    pub within_angle: f64,
    #[serde(default = "default_across_angle")]
    pub across_angle: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Cifar10Binary,
    Idx,
    Csv,
    Synth,
}

fn default_num_classes() -> usize {
    10
}
fn default_synth_clusters() -> usize {
    2
}
fn default_synth_classes() -> usize {
    3
}
fn default_synth_samples() -> usize {
    100
}
fn default_synth_dim() -> usize {
    60
}
fn default_within_angle() -> f64 {
    30.0
}
fn default_across_angle() -> f64 {
    85.0
}
fn default_noise() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureSection {
    #[serde(default = "default_p")]
    pub p: usize,
}

fn default_p() -> usize {
    2
}

impl Default for SignatureSection {
    fn default() -> Self {
        Self { p: default_p() }
    }
}

/// A numeric threshold, or `"auto"` to take the largest merge gap.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Value(f64),
    Named(String),
}

impl Default for ThresholdSetting {
    fn default() -> Self {
        Self::Named("auto".into())
    }
}

impl ThresholdSetting {
    pub fn is_auto(&self) -> bool {
        matches!(self, Self::Named(s) if s.eq_ignore_ascii_case("auto"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringSection {
    #[serde(default)]
    pub threshold: ThresholdSetting,
    #[serde(default = "default_linkage")]
    pub linkage: String,
    /// Which class proximity feeds the clustering: "eq2" or "eq3".
    #[serde(default = "default_cluster_source")]
    pub source: String,
}

fn default_linkage() -> String {
    "average".into()
}
fn default_cluster_source() -> String {
    "eq2".into()
}

impl Default for ClusteringSection {
    fn default() -> Self {
        Self {
            threshold: ThresholdSetting::default(),
            linkage: default_linkage(),
            source: default_cluster_source(),
        }
    }
}

impl ClusteringSection {
    pub fn linkage(&self) -> Result<Linkage> {
        Linkage::from_tag(&self.linkage.to_ascii_uppercase())
            .with_context(|| format!("unknown linkage {:?}", self.linkage))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub method: String,
    pub num_clients: usize,
    /// Partition seed; defaults to the experiment seed.
    pub seed: Option<u64>,
    pub labels_per_client: Option<usize>,
    pub alpha: Option<f64>,
    #[serde(default = "default_shards")]
    pub shards_per_client: usize,
    /// Per dataset: clients, samples per client, samples per class. Aligned
    /// with the `[[datasets]]` order; read by the MIX method only.
    pub mix_layout: Option<Vec<[usize; 3]>>,
}

fn default_shards() -> usize {
    2
}

impl PartitionSection {
    pub fn method(&self) -> Result<PartitionMethod> {
        PartitionMethod::from_tag(&self.method)
            .with_context(|| format!("unknown partition method {:?}", self.method))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub algorithms: Vec<String>,
    #[serde(default = "default_architecture")]
    pub architecture: String,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    pub rounds: usize,
    #[serde(default = "default_client_fraction")]
    pub client_fraction: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "default_ifca_clusters")]
    pub ifca_clusters: usize,
    #[serde(default = "default_lg_local_layers")]
    pub lg_local_layers: usize,
    pub finetune_epochs: Option<usize>,
    #[serde(default = "default_repeat_seeds")]
    pub repeat_seeds: usize,
}

fn default_architecture() -> String {
    "softmax".into()
}
fn default_hidden_dim() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_momentum() -> f64 {
    0.5
}
fn default_batch_size() -> usize {
    10
}
fn default_local_epochs() -> usize {
    10
}
fn default_client_fraction() -> f64 {
    1.0
}
fn default_ifca_clusters() -> usize {
    2
}
fn default_lg_local_layers() -> usize {
    1
}
fn default_repeat_seeds() -> usize {
    1
}

impl FederationSection {
    pub fn algorithms(&self) -> Result<Vec<Algorithm>> {
        self.algorithms
            .iter()
            .map(|tag| {
                Algorithm::from_tag(tag).with_context(|| format!("unknown algorithm {:?}", tag))
            })
            .collect()
    }

    /// The shared training hyper-parameters with the given stream seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            local_epochs: self.local_epochs,
            rounds: self.rounds,
            client_fraction: self.client_fraction,
            mu: self.mu,
            ifca_clusters: self.ifca_clusters,
            lg_local_layers: self.lg_local_layers,
            finetune_epochs: self.finetune_epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

fn default_out_dir() -> String {
    "out".into()
}

// ── The experiment config ───────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Directory that relative dataset paths resolve against; falls back to
    /// the `HETFED_DATA_DIR` environment variable, then the working
    /// directory.
    pub data_root: Option<String>,
    pub datasets: Vec<DatasetSection>,
    #[serde(default)]
    pub signature: SignatureSection,
    #[serde(default)]
    pub clustering: ClusteringSection,
    pub partition: Option<PartitionSection>,
    pub federation: Option<FederationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses and validates a config file. Any failure here is a config
    /// error (CLI exit code 2), not a pipeline error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            bail!("at least one [[datasets]] section is required");
        }
        for d in &self.datasets {
            match d.format {
                DatasetFormat::Cifar10Binary => {
                    if d.paths.is_empty() {
                        bail!("dataset {:?}: cifar10-binary needs batch files in paths", d.name);
                    }
                }
                DatasetFormat::Idx => {
                    if d.paths.len() != 1 || d.label_path.is_none() {
                        bail!(
                            "dataset {:?}: idx needs one image file in paths and a label_path",
                            d.name
                        );
                    }
                }
                DatasetFormat::Csv => {
                    if d.paths.len() != 1 {
                        bail!("dataset {:?}: csv needs exactly one file in paths", d.name);
                    }
                    if d.image_shape.is_none() {
                        bail!("dataset {:?}: csv needs image_shape", d.name);
                    }
                }
                DatasetFormat::Synth => {}
            }
            if d.num_classes == 0 {
                bail!("dataset {:?}: num_classes must be >= 1", d.name);
            }
        }
        if self.signature.p == 0 {
            bail!("signature.p must be >= 1");
        }
        if let ThresholdSetting::Named(s) = &self.clustering.threshold {
            if !s.eq_ignore_ascii_case("auto") {
                bail!("clustering.threshold must be a number or \"auto\", got {:?}", s);
            }
        }
        if !matches!(self.clustering.source.as_str(), "eq2" | "eq3") {
            bail!("clustering.source must be \"eq2\" or \"eq3\"");
        }
        self.clustering.linkage()?;
        if let Some(p) = &self.partition {
            p.method()?;
            if p.num_clients == 0 {
                bail!("partition.num_clients must be >= 1");
            }
        }
        if let Some(f) = &self.federation {
            if f.algorithms.is_empty() {
                bail!("federation.algorithms must list at least one algorithm");
            }
            f.algorithms()?;
            if f.repeat_seeds == 0 {
                bail!("federation.repeat_seeds must be >= 1");
            }
            if !matches!(f.architecture.as_str(), "softmax" | "mlp") {
                bail!("federation.architecture must be \"softmax\" or \"mlp\"");
            }
            if f.architecture == "mlp" && f.hidden_dim == 0 {
                bail!("federation.hidden_dim must be >= 1 for the mlp architecture");
            }
        }
        Ok(())
    }

    /// The directory relative dataset paths resolve against, if any.
    pub fn data_root(&self) -> Option<PathBuf> {
        if let Some(root) = &self.data_root {
            return Some(PathBuf::from(root));
        }
        env::var_os(DATA_DIR_VAR).map(PathBuf::from)
    }

    /// Resolves one dataset path against the data root.
    pub fn resolve_path(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            return p;
        }
        match self.data_root() {
            Some(root) => root.join(p),
            None => p,
        }
    }
}
