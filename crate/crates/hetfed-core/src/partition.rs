//! Client data partition generators.
//!
//! Six methods split one dataset's training indices across clients: a
//! uniform IID split, label-skew and Dirichlet splits over all classes, the
//! same two restricted to super clusters of classes, and a multi-dataset
//! mix where each client holds a stratified subsample of exactly one
//! dataset. All randomness flows from per-method derived streams of the
//! partition seed, so a (spec, seed) pair fully determines the output.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::Distribution;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::clustering::SuperClustering;
use crate::dataset::{concat_datasets, concat_offsets, DatasetError, DatasetView};
use crate::streams::{self, tag};

// Sub-stream identifiers under `tag::PARTITION`, one per method.
const M_IID: u64 = 0;
const M_CNIID: u64 = 1;
const M_CDIR: u64 = 2;
const M_SCNIID: u64 = 3;
const M_MIX: u64 = 5;

const LABEL_ASSIGNMENT_ATTEMPTS: usize = 100_000;

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionError {
    EmptyDataset,
    /// num_clients is zero or exceeds the training-set size.
    BadClientCount,
    /// labels_per_client is zero or exceeds the available label count.
    BadLabelsPerClient,
    /// num_clients × labels_per_client cannot cover every class.
    UncoverableLabels,
    /// Dirichlet concentration must be positive and finite.
    BadAlpha,
    /// Label assignment failed to cover every class within the attempt cap.
    CoverageSearchExhausted,
    /// A dataset label is missing from the super clustering.
    ClusterMissingLabel { label: usize },
    /// A super cluster holds fewer labels than labels_per_client.
    ClusterTooSmall { cluster: usize },
    /// Fewer clients than non-empty super clusters.
    TooFewClientsForClusters { clients: usize, clusters: usize },
    /// A cluster's eligible samples cannot fill one sample per shard.
    ShardsUnderfilled { cluster: usize },
    /// Mix layout length or per-client sample arithmetic is inconsistent.
    LayoutMismatch,
    /// A dataset lacks client_count × samples_per_class samples of a class.
    InsufficientClassSamples { dataset: String, class: usize },
    Dataset(DatasetError),
}

impl From<DatasetError> for PartitionError {
    fn from(e: DatasetError) -> Self {
        Self::Dataset(e)
    }
}

impl core::fmt::Display for PartitionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::EmptyDataset => write!(f, "dataset has no training samples"),
            Self::BadClientCount => write!(f, "client count must be in [1, training-set size]"),
            Self::BadLabelsPerClient => write!(f, "labels_per_client outside [1, label count]"),
            Self::UncoverableLabels => {
                write!(f, "num_clients x labels_per_client cannot cover every class")
            }
            Self::BadAlpha => write!(f, "alpha must be positive and finite"),
            Self::CoverageSearchExhausted => {
                write!(f, "label assignment never covered every class")
            }
            Self::ClusterMissingLabel { label } => {
                write!(f, "label {label} is missing from the super clustering")
            }
            Self::ClusterTooSmall { cluster } => {
                write!(f, "super cluster {cluster} has fewer labels than labels_per_client")
            }
            Self::TooFewClientsForClusters { clients, clusters } => {
                write!(f, "{clients} clients cannot populate {clusters} super clusters")
            }
            Self::ShardsUnderfilled { cluster } => {
                write!(f, "super cluster {cluster} has fewer eligible samples than shards")
            }
            Self::LayoutMismatch => write!(f, "mix layout inconsistent with the dataset list"),
            Self::InsufficientClassSamples { dataset, class } => {
                write!(f, "dataset {dataset} lacks samples of class {class} for the mix layout")
            }
            Self::Dataset(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for PartitionError {}

// ── Types ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMethod {
    Iid,
    CNiid,
    CDir,
    ScNiid,
    ScDir,
    Mix,
}

impl PartitionMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Iid => "IID",
            Self::CNiid => "C-NIID",
            Self::CDir => "C-DIR",
            Self::ScNiid => "SC-NIID",
            Self::ScDir => "SC-DIR",
            Self::Mix => "MIX",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .map(|c| if c == '_' { '-' } else { c.to_ascii_uppercase() })
            .collect();
        match norm.as_str() {
            "IID" => Some(Self::Iid),
            "C-NIID" => Some(Self::CNiid),
            "C-DIR" => Some(Self::CDir),
            "SC-NIID" => Some(Self::ScNiid),
            "SC-DIR" => Some(Self::ScDir),
            "MIX" => Some(Self::Mix),
            _ => None,
        }
    }
}

/// One dataset's slice of a mix layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MixEntry {
    pub dataset: String,
    pub clients: usize,
    pub samples_per_client: usize,
    pub samples_per_class: usize,
}

/// Everything needed to regenerate a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub method: PartitionMethod,
    pub num_clients: usize,
    pub seed: u64,
    pub labels_per_client: Option<usize>,
    pub alpha: Option<f64>,
    pub shards_per_client: usize,
    pub superclustering: Option<SuperClustering>,
    pub mix_layout: Option<Vec<MixEntry>>,
}

impl PartitionSpec {
    fn bare(method: PartitionMethod, num_clients: usize, seed: u64) -> Self {
        Self {
            method,
            num_clients,
            seed,
            labels_per_client: None,
            alpha: None,
            shards_per_client: 2,
            superclustering: None,
            mix_layout: None,
        }
    }
}

/// Per-client training indices into one dataset's canonical sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub spec: PartitionSpec,
    pub client_indices: Vec<Vec<usize>>,
    pub label_histograms: Vec<Vec<usize>>,
    /// Super cluster of each client, for the SC methods.
    pub cluster_of_client: Option<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }

    pub fn client_len(&self, client: usize) -> usize {
        self.client_indices[client].len()
    }
}

fn histograms(dataset: &DatasetView, indices: &[Vec<usize>]) -> Vec<Vec<usize>> {
    indices
        .iter()
        .map(|idxs| {
            let mut h = vec![0usize; dataset.num_classes()];
            for &i in idxs {
                h[dataset.train_labels()[i]] += 1;
            }
            h
        })
        .collect()
}

fn finish(
    dataset: &DatasetView,
    spec: PartitionSpec,
    mut client_indices: Vec<Vec<usize>>,
    cluster_of_client: Option<Vec<usize>>,
) -> Partition {
    for idxs in &mut client_indices {
        idxs.sort_unstable();
    }
    let label_histograms = histograms(dataset, &client_indices);
    Partition {
        spec,
        client_indices,
        label_histograms,
        cluster_of_client,
    }
}

// ── Shared helpers ──────────────────────────────────────────────────────

pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut ChaCha12Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// First `k` elements of a fresh shuffle of `pool`, ascending.
pub(crate) fn sample_distinct(pool: &[usize], k: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut items: Vec<usize> = pool.to_vec();
    for i in 0..k {
        let j = rng.gen_range(i..items.len());
        items.swap(i, j);
    }
    items.truncate(k);
    items.sort_unstable();
    items
}

/// Splits `total` into integer parts proportional to `weights` using
/// largest-remainder rounding; remainder ties go to the lowest index.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        let mut parts = vec![total / weights.len(); weights.len()];
        for p in parts.iter_mut().take(total % weights.len()) {
            *p += 1;
        }
        return parts;
    }
    let mut parts = Vec::with_capacity(weights.len());
    let mut fracs = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        let target = total as f64 * (w / wsum);
        let base = crate::fmath::floor(target) as usize;
        assigned += base;
        parts.push(base);
        fracs.push((i, target - base as f64));
    }
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in fracs.iter().take(total - assigned) {
        parts[i] += 1;
    }
    parts
}

fn dirichlet(alpha: f64, k: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let gamma = rand_distr::Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if !(sum > 1e-300) {
        // All draws underflowed (possible for very small alpha); fall back
        // to a uniform split rather than dividing by zero.
        return vec![1.0 / k as f64; k];
    }
    for d in draws.iter_mut() {
        *d /= sum;
    }
    draws
}

/// Labels 0..num_classes mapped to their super cluster, plus each
/// cluster's ascending label list.
fn cluster_labels(
    dataset: &DatasetView,
    sc: &SuperClustering,
) -> Result<(Vec<usize>, Vec<Vec<usize>>), PartitionError> {
    let mut of_label = Vec::with_capacity(dataset.num_classes());
    let mut per_cluster = vec![Vec::new(); sc.num_clusters];
    for label in 0..dataset.num_classes() {
        let c = sc
            .cluster_of(&label.to_string())
            .ok_or(PartitionError::ClusterMissingLabel { label })?;
        of_label.push(c);
        per_cluster[c].push(label);
    }
    Ok((of_label, per_cluster))
}

/// Clients per cluster, proportional to cluster sample counts with
/// largest-remainder rounding, then adjusted so every non-empty cluster
/// keeps at least one client (taken from the currently largest allocation).
fn allocate_clients(
    num_clients: usize,
    cluster_sizes: &[usize],
) -> Result<Vec<usize>, PartitionError> {
    let nonempty = cluster_sizes.iter().filter(|&&s| s > 0).count();
    if num_clients < nonempty {
        return Err(PartitionError::TooFewClientsForClusters {
            clients: num_clients,
            clusters: nonempty,
        });
    }
    let weights: Vec<f64> = cluster_sizes.iter().map(|&s| s as f64).collect();
    let mut alloc = largest_remainder(num_clients, &weights);
    loop {
        let Some(starved) = alloc
            .iter()
            .position(|&a| a == 0)
            .filter(|&k| cluster_sizes[k] > 0)
        else {
            break;
        };
        let donor = (0..alloc.len())
            .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
            .expect("clusters non-empty");
        alloc[donor] -= 1;
        alloc[starved] += 1;
    }
    Ok(alloc)
}

/// Global client ids per cluster: cluster 0 takes the lowest ids, and so on.
fn client_ranges(alloc: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(alloc.len());
    let mut next = 0;
    for &a in alloc {
        out.push((next..next + a).collect());
        next += a;
    }
    out
}

// ── IID ─────────────────────────────────────────────────────────────────

/// Uniformly shuffles the training set into equal-size client slices; the
/// remainder goes to the lowest-index clients, one extra sample each.
pub fn partition_iid(
    dataset: &DatasetView,
    num_clients: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    let n = dataset.train_len();
    if n == 0 {
        return Err(PartitionError::EmptyDataset);
    }
    if num_clients == 0 || num_clients > n {
        return Err(PartitionError::BadClientCount);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = streams::derive_rng(seed, &[tag::PARTITION, M_IID]);
    shuffle(&mut idx, &mut rng);
    let base = n / num_clients;
    let rem = n % num_clients;
    let mut client_indices = Vec::with_capacity(num_clients);
    let mut cursor = 0;
    for c in 0..num_clients {
        let take = base + usize::from(c < rem);
        client_indices.push(idx[cursor..cursor + take].to_vec());
        cursor += take;
    }
    let spec = PartitionSpec::bare(PartitionMethod::Iid, num_clients, seed);
    Ok(finish(dataset, spec, client_indices, None))
}

// ── C-NIID: label skew over all classes ─────────────────────────────────

/// Each client draws its set of distinct labels from `pool`; redraws the
/// whole assignment until every pool label has at least one owner.
fn assign_labels_covering(
    clients: usize,
    labels_per_client: usize,
    pool: &[usize],
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Vec<usize>>, PartitionError> {
    for _ in 0..LABEL_ASSIGNMENT_ATTEMPTS {
        let picks: Vec<Vec<usize>> = (0..clients)
            .map(|_| sample_distinct(pool, labels_per_client, rng))
            .collect();
        let covered = pool
            .iter()
            .all(|l| picks.iter().any(|p| p.contains(l)));
        if covered {
            return Ok(picks);
        }
    }
    Err(PartitionError::CoverageSearchExhausted)
}

/// Splits one label's shuffled samples equally among its owners; owner
/// counts differ by at most one, extras to the lowest-id owners.
fn deal_label(
    dataset: &DatasetView,
    label: usize,
    owners: &[usize],
    rng: &mut ChaCha12Rng,
    client_indices: &mut [Vec<usize>],
) {
    let mut samples = dataset.samples_of_class(label);
    shuffle(&mut samples, rng);
    let base = samples.len() / owners.len();
    let rem = samples.len() % owners.len();
    let mut cursor = 0;
    for (rank, &owner) in owners.iter().enumerate() {
        let take = base + usize::from(rank < rem);
        client_indices[owner].extend_from_slice(&samples[cursor..cursor + take]);
        cursor += take;
    }
}

/// Label-skew split: every client owns exactly `labels_per_client` random
/// classes, each class's samples divided equally among its owners, and the
/// label assignment is redrawn until every class has an owner.
pub fn partition_cniid(
    dataset: &DatasetView,
    num_clients: usize,
    labels_per_client: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    let n = dataset.train_len();
    let classes = dataset.num_classes();
    if n == 0 {
        return Err(PartitionError::EmptyDataset);
    }
    if num_clients == 0 || num_clients > n {
        return Err(PartitionError::BadClientCount);
    }
    if labels_per_client == 0 || labels_per_client > classes {
        return Err(PartitionError::BadLabelsPerClient);
    }
    if num_clients * labels_per_client < classes {
        return Err(PartitionError::UncoverableLabels);
    }

    let pool: Vec<usize> = (0..classes).collect();
    let mut pick_rng = streams::derive_rng(seed, &[tag::PARTITION, M_CNIID, 0]);
    let picks = assign_labels_covering(num_clients, labels_per_client, &pool, &mut pick_rng)?;

    let mut client_indices = vec![Vec::new(); num_clients];
    for label in 0..classes {
        let owners: Vec<usize> = (0..num_clients)
            .filter(|&c| picks[c].contains(&label))
            .collect();
        let mut rng = streams::derive_rng(seed, &[tag::PARTITION, M_CNIID, 1, label as u64]);
        deal_label(dataset, label, &owners, &mut rng, &mut client_indices);
    }

    let mut spec = PartitionSpec::bare(PartitionMethod::CNiid, num_clients, seed);
    spec.labels_per_client = Some(labels_per_client);
    Ok(finish(dataset, spec, client_indices, None))
}

// ── C-Dir: Dirichlet label proportions ──────────────────────────────────

/// Deals one class by Dirichlet proportions over `clients`; the stream is
/// keyed by class alone, so restricting to a cluster's clients only changes
/// the Dirichlet dimension, and a single-cluster run reproduces the
/// unrestricted split bit for bit.
fn deal_class_dirichlet(
    dataset: &DatasetView,
    class: usize,
    clients: &[usize],
    alpha: f64,
    seed: u64,
    client_indices: &mut [Vec<usize>],
) {
    let mut rng = streams::derive_rng(seed, &[tag::PARTITION, M_CDIR, class as u64]);
    let props = dirichlet(alpha, clients.len(), &mut rng);
    let mut samples = dataset.samples_of_class(class);
    let counts = largest_remainder(samples.len(), &props);
    shuffle(&mut samples, &mut rng);
    let mut cursor = 0;
    for (rank, &client) in clients.iter().enumerate() {
        client_indices[client].extend_from_slice(&samples[cursor..cursor + counts[rank]]);
        cursor += counts[rank];
    }
}

/// Dirichlet split: per class, client shares are drawn from a symmetric
/// Dirichlet(alpha) and converted to counts by largest-remainder rounding,
/// conserving every class exactly.
pub fn partition_cdir(
    dataset: &DatasetView,
    num_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Partition, PartitionError> {
    let n = dataset.train_len();
    if n == 0 {
        return Err(PartitionError::EmptyDataset);
    }
    if num_clients == 0 || num_clients > n {
        return Err(PartitionError::BadClientCount);
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(PartitionError::BadAlpha);
    }
    let clients: Vec<usize> = (0..num_clients).collect();
    let mut client_indices = vec![Vec::new(); num_clients];
    for class in 0..dataset.num_classes() {
        deal_class_dirichlet(dataset, class, &clients, alpha, seed, &mut client_indices);
    }
    let mut spec = PartitionSpec::bare(PartitionMethod::CDir, num_clients, seed);
    spec.alpha = Some(alpha);
    Ok(finish(dataset, spec, client_indices, None))
}

// ── SC-NIID: shard deal inside super clusters ───────────────────────────

/// Super-cluster label skew: clients are allocated to clusters
/// proportionally to cluster sample counts, each client picks
/// `labels_per_client` labels inside its cluster, and the cluster's samples
/// of all picked labels are cut into `shards_per_client × cluster clients`
/// label-sorted shards dealt randomly, `shards_per_client` per client.
/// Leftover samples extend the last shard; samples of unpicked labels stay
/// unassigned.
pub fn partition_scniid(
    dataset: &DatasetView,
    superclustering: &SuperClustering,
    num_clients: usize,
    labels_per_client: usize,
    shards_per_client: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    let n = dataset.train_len();
    if n == 0 {
        return Err(PartitionError::EmptyDataset);
    }
    if num_clients == 0 || num_clients > n {
        return Err(PartitionError::BadClientCount);
    }
    if labels_per_client == 0 || shards_per_client == 0 {
        return Err(PartitionError::BadLabelsPerClient);
    }
    let (_, per_cluster) = cluster_labels(dataset, superclustering)?;
    let sizes: Vec<usize> = per_cluster
        .iter()
        .map(|labels| labels.iter().map(|&l| dataset.samples_of_class(l).len()).sum())
        .collect();
    for (k, labels) in per_cluster.iter().enumerate() {
        if sizes[k] > 0 && labels.len() < labels_per_client {
            return Err(PartitionError::ClusterTooSmall { cluster: k });
        }
    }
    let alloc = allocate_clients(num_clients, &sizes)?;
    let ranges = client_ranges(&alloc);

    let mut client_indices = vec![Vec::new(); num_clients];
    let mut cluster_of_client = vec![0usize; num_clients];
    for (k, clients) in ranges.iter().enumerate() {
        if clients.is_empty() {
            continue;
        }
        for &c in clients {
            cluster_of_client[c] = k;
        }
        let mut pick_rng = streams::derive_rng(seed, &[tag::PARTITION, M_SCNIID, 0, k as u64]);
        let mut picked = vec![false; dataset.num_classes()];
        for _ in clients {
            for l in sample_distinct(&per_cluster[k], labels_per_client, &mut pick_rng) {
                picked[l] = true;
            }
        }
        // Pool the picked labels' samples sorted by label so shards are
        // label-homogeneous, matching the sorted-shard deal protocol.
        let mut pool = Vec::new();
        for &l in &per_cluster[k] {
            if picked[l] {
                pool.extend(dataset.samples_of_class(l));
            }
        }
        let shard_count = shards_per_client * clients.len();
        let shard_size = pool.len() / shard_count;
        if shard_size == 0 {
            return Err(PartitionError::ShardsUnderfilled { cluster: k });
        }
        let mut shard_ids: Vec<usize> = (0..shard_count).collect();
        let mut deal_rng = streams::derive_rng(seed, &[tag::PARTITION, M_SCNIID, 1, k as u64]);
        shuffle(&mut shard_ids, &mut deal_rng);
        for (rank, &client) in clients.iter().enumerate() {
            for &s in &shard_ids[rank * shards_per_client..(rank + 1) * shards_per_client] {
                let start = s * shard_size;
                let end = if s + 1 == shard_count { pool.len() } else { (s + 1) * shard_size };
                client_indices[client].extend_from_slice(&pool[start..end]);
            }
        }
    }

    let mut spec = PartitionSpec::bare(PartitionMethod::ScNiid, num_clients, seed);
    spec.labels_per_client = Some(labels_per_client);
    spec.shards_per_client = shards_per_client;
    spec.superclustering = Some(superclustering.clone());
    Ok(finish(dataset, spec, client_indices, Some(cluster_of_client)))
}

// ── SC-Dir: Dirichlet inside super clusters ─────────────────────────────

/// Super-cluster Dirichlet split: proportional client allocation as in
/// [`partition_scniid`], then the Dirichlet deal of [`partition_cdir`]
/// restricted to each cluster's labels and clients.
pub fn partition_scdir(
    dataset: &DatasetView,
    superclustering: &SuperClustering,
    num_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Partition, PartitionError> {
    let n = dataset.train_len();
    if n == 0 {
        return Err(PartitionError::EmptyDataset);
    }
    if num_clients == 0 || num_clients > n {
        return Err(PartitionError::BadClientCount);
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(PartitionError::BadAlpha);
    }
    let (_, per_cluster) = cluster_labels(dataset, superclustering)?;
    let sizes: Vec<usize> = per_cluster
        .iter()
        .map(|labels| labels.iter().map(|&l| dataset.samples_of_class(l).len()).sum())
        .collect();
    let alloc = allocate_clients(num_clients, &sizes)?;
    let ranges = client_ranges(&alloc);

    let mut client_indices = vec![Vec::new(); num_clients];
    let mut cluster_of_client = vec![0usize; num_clients];
    for (k, clients) in ranges.iter().enumerate() {
        if clients.is_empty() {
            continue;
        }
        for &c in clients {
            cluster_of_client[c] = k;
        }
        for &class in &per_cluster[k] {
            deal_class_dirichlet(dataset, class, clients, alpha, seed, &mut client_indices);
        }
    }

    let mut spec = PartitionSpec::bare(PartitionMethod::ScDir, num_clients, seed);
    spec.alpha = Some(alpha);
    spec.superclustering = Some(superclustering.clone());
    Ok(finish(dataset, spec, client_indices, Some(cluster_of_client)))
}

// ── MIX: stratified per-dataset subsamples ──────────────────────────────

/// Multi-dataset mix over the concatenated, label-offset dataset: per
/// layout entry `(clients, samples_per_client, samples_per_class)`, each of
/// that dataset's clients draws exactly `samples_per_class` samples of each
/// of its classes, without replacement. Returns the partition together with
/// the concatenated dataset it indexes.
pub fn partition_mix(
    datasets: &[DatasetView],
    layout: &[(usize, usize, usize)],
    seed: u64,
) -> Result<(Partition, DatasetView), PartitionError> {
    if datasets.is_empty() || layout.len() != datasets.len() {
        return Err(PartitionError::LayoutMismatch);
    }
    for (d, &(clients, per_client, per_class)) in layout.iter().enumerate() {
        if clients == 0 || per_class == 0 {
            return Err(PartitionError::LayoutMismatch);
        }
        if per_client != per_class * datasets[d].num_classes() {
            return Err(PartitionError::LayoutMismatch);
        }
        for class in 0..datasets[d].num_classes() {
            if datasets[d].samples_of_class(class).len() < clients * per_class {
                return Err(PartitionError::InsufficientClassSamples {
                    dataset: datasets[d].name().to_string(),
                    class,
                });
            }
        }
    }

    let combined = concat_datasets(datasets)?;
    let offsets = concat_offsets(datasets);
    let num_clients: usize = layout.iter().map(|&(c, _, _)| c).sum();
    let mut client_indices = vec![Vec::new(); num_clients];
    let mut first_client = 0;
    for (d, &(clients, _, per_class)) in layout.iter().enumerate() {
        for class in 0..datasets[d].num_classes() {
            let mut queue = datasets[d].samples_of_class(class);
            let mut rng =
                streams::derive_rng(seed, &[tag::PARTITION, M_MIX, d as u64, class as u64]);
            shuffle(&mut queue, &mut rng);
            for c in 0..clients {
                for &s in &queue[c * per_class..(c + 1) * per_class] {
                    client_indices[first_client + c].push(offsets[d] + s);
                }
            }
        }
        first_client += clients;
    }

    let mut spec = PartitionSpec::bare(PartitionMethod::Mix, num_clients, seed);
    spec.mix_layout = Some(
        datasets
            .iter()
            .zip(layout)
            .map(|(ds, &(clients, per_client, per_class))| MixEntry {
                dataset: ds.name().to_string(),
                clients,
                samples_per_client: per_client,
                samples_per_class: per_class,
            })
            .collect(),
    );
    let partition = finish(&combined, spec, client_indices, None);
    Ok((partition, combined))
}

// ── Tests ───────────────────────────────────────────────────────────────
