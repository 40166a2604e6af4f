//! Readers and writers for the pipeline's on-disk artifacts.
//!
//! Proximity matrices, partition measures, round logs, and summaries are
//! CSV; super clusterings and partition manifests are JSON. Every writer is
//! deterministic, so re-running a command on the same inputs reproduces its
//! output files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hetfed_core::clustering::{Linkage, SuperClustering};
use hetfed_core::numerics::Matrix;
use hetfed_core::partition::{MixEntry, Partition, PartitionMethod, PartitionSpec};
use hetfed_core::signature::{ProximityMatrix, ProximityMeasure};
use serde::{Deserialize, Serialize};

// ── Proximity matrix CSV ────────────────────────────────────────────────

/// Writes a proximity matrix: the first row names the subjects, each later
/// row is one row of the symmetric matrix, entries at 6 decimal places.
pub fn write_proximity_csv(matrix: &ProximityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(matrix.subjects())?;
    let n = matrix.len();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.6}", matrix.get(i, j))).collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a proximity matrix written by [`write_proximity_csv`]. The measure
/// is not stored in the file, so the caller states it.
pub fn read_proximity_csv(
    path: impl AsRef<Path>,
    measure: ProximityMeasure,
) -> Result<ProximityMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => bail!("{}: empty file", path.display()),
    };
    let subjects: Vec<String> = header.iter().map(str::to_string).collect();
    let n = subjects.len();
    let mut entries = Vec::with_capacity(n * n);
    for (i, record) in records.enumerate() {
        let record = record.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        if record.len() != n {
            bail!("{} row {}: {} fields, expected {}", path.display(), i + 1, record.len(), n);
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .with_context(|| format!("{} row {}: entry {:?}", path.display(), i + 1, field))?;
            entries.push(v);
        }
    }
    if entries.len() != n * n {
        bail!("{}: {} matrix rows for {} subjects", path.display(), entries.len() / n.max(1), n);
    }
    let entries = Matrix::new(n, n, entries)?;
    Ok(ProximityMatrix::new(subjects, entries, measure)?)
}

// ── Super clustering JSON ───────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ClusteringDoc {
    threshold: f64,
    linkage: String,
    clusters: Vec<Vec<String>>,
    merge_history: Vec<(String, String, f64)>,
}

fn clustering_to_doc(sc: &SuperClustering) -> ClusteringDoc {
    ClusteringDoc {
        threshold: sc.threshold,
        linkage: sc.linkage.tag().to_string(),
        clusters: sc.clusters(),
        merge_history: sc.merge_history.clone(),
    }
}

fn clustering_from_doc(doc: ClusteringDoc) -> Result<SuperClustering> {
    let linkage = Linkage::from_tag(&doc.linkage)
        .with_context(|| format!("unknown linkage {:?}", doc.linkage))?;
    let mut assignments = BTreeMap::new();
    for (c, members) in doc.clusters.iter().enumerate() {
        for subject in members {
            if assignments.insert(subject.clone(), c).is_some() {
                bail!("subject {:?} appears in more than one cluster", subject);
            }
        }
    }
    Ok(SuperClustering::from_parts(assignments, doc.threshold, linkage, doc.merge_history)?)
}

pub fn write_superclustering_json(sc: &SuperClustering, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(&clustering_to_doc(sc))?;
    fs::write(path.as_ref(), json + "\n")?;
    Ok(())
}

pub fn read_superclustering_json(path: impl AsRef<Path>) -> Result<SuperClustering> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: ClusteringDoc =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    clustering_from_doc(doc)
}

// ── Partition manifest JSON ─────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct MixEntryDoc {
    dataset: String,
    clients: usize,
    samples_per_client: usize,
    samples_per_class: usize,
}

#[derive(Serialize, Deserialize)]
struct SpecDoc {
    method: String,
    num_clients: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels_per_client: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    shards_per_client: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    superclustering: Option<ClusteringDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mix_layout: Option<Vec<MixEntryDoc>>,
}

#[derive(Serialize, Deserialize)]
struct ClientDoc {
    id: usize,
    indices: Vec<usize>,
    label_histogram: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    spec: SpecDoc,
    clients: Vec<ClientDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    supercluster_of_client: Option<Vec<usize>>,
}

pub fn write_partition_json(partition: &Partition, path: impl AsRef<Path>) -> Result<()> {
    let spec = &partition.spec;
    let doc = ManifestDoc {
        spec: SpecDoc {
            method: spec.method.tag().to_string(),
            num_clients: spec.num_clients,
            seed: spec.seed,
            labels_per_client: spec.labels_per_client,
            alpha: spec.alpha,
            shards_per_client: spec.shards_per_client,
            superclustering: spec.superclustering.as_ref().map(clustering_to_doc),
            mix_layout: spec.mix_layout.as_ref().map(|entries| {
                entries
                    .iter()
                    .map(|e| MixEntryDoc {
                        dataset: e.dataset.clone(),
                        clients: e.clients,
                        samples_per_client: e.samples_per_client,
                        samples_per_class: e.samples_per_class,
                    })
                    .collect()
            }),
        },
        clients: partition
            .client_indices
            .iter()
            .zip(&partition.label_histograms)
            .enumerate()
            .map(|(id, (indices, histogram))| ClientDoc {
                id,
                indices: indices.clone(),
                label_histogram: histogram.clone(),
            })
            .collect(),
        supercluster_of_client: partition.cluster_of_client.clone(),
    };
    let json = serde_json::to_string_pretty(&doc)?;
    fs::write(path.as_ref(), json + "\n")?;
    Ok(())
}

pub fn read_partition_json(path: impl AsRef<Path>) -> Result<Partition> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: ManifestDoc =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let method = PartitionMethod::from_tag(&doc.spec.method)
        .with_context(|| format!("unknown partition method {:?}", doc.spec.method))?;
    if doc.clients.len() != doc.spec.num_clients {
        bail!(
            "{}: {} client entries for num_clients {}",
            path.display(),
            doc.clients.len(),
            doc.spec.num_clients
        );
    }
    for (at, client) in doc.clients.iter().enumerate() {
        if client.id != at {
            bail!("{}: client ids must be 0..n in order, found {} at {}", path.display(), client.id, at);
        }
        if client.label_histogram.iter().sum::<usize>() != client.indices.len() {
            bail!("{}: client {} histogram does not count its indices", path.display(), at);
        }
    }
    if let Some(clusters) = &doc.supercluster_of_client {
        if clusters.len() != doc.clients.len() {
            bail!("{}: supercluster_of_client length mismatch", path.display());
        }
    }
    let spec = PartitionSpec {
        method,
        num_clients: doc.spec.num_clients,
        seed: doc.spec.seed,
        labels_per_client: doc.spec.labels_per_client,
        alpha: doc.spec.alpha,
        shards_per_client: doc.spec.shards_per_client,
        superclustering: doc.spec.superclustering.map(clustering_from_doc).transpose()?,
        mix_layout: doc.spec.mix_layout.map(|entries| {
            entries
                .into_iter()
                .map(|e| MixEntry {
                    dataset: e.dataset,
                    clients: e.clients,
                    samples_per_client: e.samples_per_client,
                    samples_per_class: e.samples_per_class,
                })
                .collect()
        }),
    };
    let (client_indices, label_histograms) = doc
        .clients
        .into_iter()
        .map(|c| (c.indices, c.label_histogram))
        .unzip();
    Ok(Partition {
        spec,
        client_indices,
        label_histograms,
        cluster_of_client: doc.supercluster_of_client,
    })
}

// ── Partition measures CSV ──────────────────────────────────────────────

/// Writes `measure,value` rows (EMD, EQ2, EQ3, CKA and friends) for one
/// partition.
pub fn write_measures_csv(rows: &[(String, f64)], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["measure", "value"])?;
    for (measure, value) in rows {
        writer.write_record([measure.as_str(), &format!("{value}")])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_measures_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            bail!("{}: expected measure,value rows", path.display());
        }
        let value: f64 = record[1]
            .parse()
            .with_context(|| format!("{}: value {:?}", path.display(), &record[1]))?;
        rows.push((record[0].to_string(), value));
    }
    Ok(rows)
}

// ── Round logs CSV ──────────────────────────────────────────────────────

/// One participating client in one round, as logged to CSV.
pub struct RoundRow {
    pub round: usize,
    pub client_id: usize,
    pub algorithm: String,
    pub train_loss: f64,
    pub local_test_acc: f64,
}

pub struct RoundLogWriter {
    writer: csv::Writer<fs::File>,
}

impl RoundLogWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["round", "client_id", "algorithm", "train_loss", "local_test_acc"])?;
        Ok(Self { writer })
    }

    pub fn write(&mut self, row: &RoundRow) -> Result<()> {
        self.writer.write_record([
            row.round.to_string(),
            row.client_id.to_string(),
            row.algorithm.clone(),
            format!("{}", row.train_loss),
            format!("{}", row.local_test_acc),
        ])?;
        Ok(())
    }

    /// Flushes buffered rows so partially written logs survive a failure
    /// later in the run.
    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

// ── Summary CSV ─────────────────────────────────────────────────────────

/// Final fine-tuned accuracy of one algorithm on one partition, aggregated
/// over the repeat seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub partition_method: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["algorithm", "partition_method", "mean_accuracy", "std_accuracy"])?;
    for row in rows {
        writer.write_record([
            row.algorithm.clone(),
            row.partition_method.clone(),
            format!("{}", row.mean_accuracy),
            format!("{}", row.std_accuracy),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 4 {
            bail!("{}: expected 4-column summary rows", path.display());
        }
        rows.push(SummaryRow {
            algorithm: record[0].to_string(),
            partition_method: record[1].to_string(),
            mean_accuracy: record[2].parse().with_context(|| format!("{}: mean", path.display()))?,
            std_accuracy: record[3].parse().with_context(|| format!("{}: std", path.display()))?,
        });
    }
    Ok(rows)
}

// ── Report tables ───────────────────────────────────────────────────────

/// Writes a grid as CSV: one label column named `corner`, one column per
/// entry of `columns`, one row per entry of `rows`. Missing cells are left
/// empty.
pub fn write_grid_csv(
    corner: &str,
    columns: &[String],
    rows: &[String],
    cell: impl Fn(&str, &str) -> Option<String>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec![corner.to_string()];
    header.extend(columns.iter().cloned());
    writer.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.clone()];
        record.extend(columns.iter().map(|c| cell(row, c).unwrap_or_default()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
