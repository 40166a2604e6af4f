//! The five pipeline commands: profile, cluster, partition, simulate,
//! report. Each reads the experiment config, consumes the previous stage's
//! files from the output directory, and writes its own artifacts there.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use hetfed_core::clustering::{agglomerative_cluster, suggest_threshold, SuperClustering};
use hetfed_core::dataset::{concat_datasets, synth_superclusters, to_common_dim, DatasetView};
use hetfed_core::flsim::{self, Algorithm, Architecture, TrainConfig};
use hetfed_core::measures::{avg_pairwise_client_distance, ClientDistanceMeasure, GroundMetric};
use hetfed_core::numerics::Matrix;
use hetfed_core::partition::{
    partition_cdir, partition_cniid, partition_iid, partition_mix, partition_scdir,
    partition_scniid, Partition, PartitionMethod,
};
use hetfed_core::signature::{
    build_signature, compare_datasets, proximity_eq2, proximity_eq3, ProximityMatrix,
    ProximityMeasure,
};

use crate::config::{
    DatasetFormat, DatasetSection, ExperimentConfig, FederationSection, PartitionSection,
};
use crate::ingest;
use crate::io;
use crate::CliError;

const COMMON_SHAPE: (usize, usize, usize) = (32, 32, 3);

// ── Shared plumbing ─────────────────────────────────────────────────────

fn pipeline(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Pipeline(e.into())
}

fn load_one_dataset(
    config: &ExperimentConfig,
    section: &DatasetSection,
    index: usize,
    seed: u64,
) -> Result<DatasetView> {
    let view = match section.format {
        DatasetFormat::Cifar10Binary => {
            let paths: Vec<PathBuf> =
                section.paths.iter().map(|p| config.resolve_path(p)).collect();
            ingest::load_cifar10_binary(&paths)?
        }
        DatasetFormat::Idx => {
            let image = config.resolve_path(&section.paths[0]);
            let label = config.resolve_path(section.label_path.as_ref().unwrap());
            ingest::load_idx(image, label, &section.name, section.num_classes)?
        }
        DatasetFormat::Csv => {
            let path = config.resolve_path(&section.paths[0]);
            let [h, w, c] = section.image_shape.unwrap();
            ingest::load_csv(path, &section.name, section.num_classes, (h, w, c))?
        }
        DatasetFormat::Synth => {
            // Offset by position so several synthetic sections in one
            // config draw distinct data.
            synth_superclusters(
                section.clusters,
                section.classes_per_cluster,
                section.samples_per_class,
                section.ambient_dim,
                section.within_angle,
                section.across_angle,
                section.noise,
                seed + index as u64,
            )?
            .view
        }
    };
    if section.common_dim {
        Ok(to_common_dim(&view, COMMON_SHAPE)?)
    } else {
        Ok(view)
    }
}

fn load_primary_dataset(config: &ExperimentConfig, seed: u64) -> Result<DatasetView> {
    load_one_dataset(config, &config.datasets[0], 0, seed)
}

fn need_partition_section(config: &ExperimentConfig) -> Result<&PartitionSection, CliError> {
    config
        .partition
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("this command needs a [partition] section")))
}

fn need_federation_section(config: &ExperimentConfig) -> Result<&FederationSection, CliError> {
    config
        .federation
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("this command needs a [federation] section")))
}

fn file_tag(method: PartitionMethod) -> String {
    method.tag().to_ascii_lowercase()
}

fn class_proximity_path(out: &Path, source: &str) -> PathBuf {
    out.join(format!("class_proximity_{source}.csv"))
}

fn superclusters_path(out: &Path) -> PathBuf {
    out.join("superclusters.json")
}

fn partition_path(out: &Path, tag: &str) -> PathBuf {
    out.join(format!("partition_{tag}.json"))
}

fn measures_path(out: &Path, tag: &str) -> PathBuf {
    out.join(format!("measures_{tag}.csv"))
}

fn summary_path(out: &Path, tag: &str) -> PathBuf {
    out.join(format!("summary_{tag}.csv"))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(CliError::Pipeline)
}

// ── profile ─────────────────────────────────────────────────────────────

fn class_signature_matrices(
    view: &DatasetView,
    p: usize,
) -> Result<(ProximityMatrix, ProximityMatrix)> {
    let mut sigs = Vec::with_capacity(view.num_classes());
    for class in 0..view.num_classes() {
        let indices = view.samples_of_class(class);
        let samples = view.columns_matrix(&indices);
        sigs.push(build_signature(&samples, &class.to_string(), p)?);
    }
    Ok((proximity_eq2(&sigs)?, proximity_eq3(&sigs)?))
}

fn dataset_proximity_matrices(
    views: &[DatasetView],
    p: usize,
) -> Result<(ProximityMatrix, ProximityMatrix)> {
    let n = views.len();
    let subjects: Vec<String> = views.iter().map(|v| v.name().to_string()).collect();
    let mut eq2 = vec![0.0; n * n];
    let mut eq3 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a2, a3) = compare_datasets(&views[i], &views[j], p)?;
            eq2[i * n + j] = a2;
            eq2[j * n + i] = a2;
            eq3[i * n + j] = a3;
            eq3[j * n + i] = a3;
        }
    }
    Ok((
        ProximityMatrix::new(subjects.clone(), Matrix::new(n, n, eq2)?, ProximityMeasure::Eq2)?,
        ProximityMatrix::new(subjects, Matrix::new(n, n, eq3)?, ProximityMeasure::Eq3)?,
    ))
}

/// Profiles class-level subspace proximity of the first dataset (Eq2 and
/// Eq3 CSVs), plus dataset-level proximity when several datasets are
/// configured.
pub fn cmd_profile(config: &ExperimentConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let p = config.signature.p;
    let view = load_primary_dataset(config, seed).map_err(pipeline)?;
    let (eq2, eq3) = class_signature_matrices(&view, p).map_err(pipeline)?;
    let eq2_path = class_proximity_path(out, "eq2");
    let eq3_path = class_proximity_path(out, "eq3");
    io::write_proximity_csv(&eq2, &eq2_path).map_err(CliError::Pipeline)?;
    io::write_proximity_csv(&eq3, &eq3_path).map_err(CliError::Pipeline)?;
    println!(
        "profile: {} classes of {} at p={} -> {}, {}",
        view.num_classes(),
        view.name(),
        p,
        eq2_path.display(),
        eq3_path.display()
    );

    if config.datasets.len() > 1 {
        let mut views = vec![view];
        for (i, section) in config.datasets.iter().enumerate().skip(1) {
            views.push(load_one_dataset(config, section, i, seed).map_err(pipeline)?);
        }
        let (d2, d3) = dataset_proximity_matrices(&views, p).map_err(pipeline)?;
        let d2_path = out.join("dataset_proximity_eq2.csv");
        let d3_path = out.join("dataset_proximity_eq3.csv");
        io::write_proximity_csv(&d2, &d2_path).map_err(CliError::Pipeline)?;
        io::write_proximity_csv(&d3, &d3_path).map_err(CliError::Pipeline)?;
        println!(
            "profile: {} datasets -> {}, {}",
            views.len(),
            d2_path.display(),
            d3_path.display()
        );
    }
    Ok(())
}

// ── cluster ─────────────────────────────────────────────────────────────

/// Clusters the profiled class proximity into super clusters and writes
/// them as JSON.
pub fn cmd_cluster(config: &ExperimentConfig, out: &Path, _seed: u64) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let source = &config.clustering.source;
    let input = class_proximity_path(out, source);
    if !input.exists() {
        return Err(CliError::Pipeline(anyhow!(
            "{} not found; run `hetfed profile` first",
            input.display()
        )));
    }
    let measure = match source.as_str() {
        "eq2" => ProximityMeasure::Eq2,
        _ => ProximityMeasure::Eq3,
    };
    let prox = io::read_proximity_csv(&input, measure).map_err(CliError::Pipeline)?;
    let linkage = config.clustering.linkage().map_err(CliError::Config)?;
    let threshold = if config.clustering.threshold.is_auto() {
        suggest_threshold(&prox, linkage).map_err(pipeline)?
    } else {
        match config.clustering.threshold {
            crate::config::ThresholdSetting::Value(v) => v,
            _ => unreachable!("validated at load"),
        }
    };
    let clustering = agglomerative_cluster(&prox, threshold, linkage);
    let path = superclusters_path(out);
    io::write_superclustering_json(&clustering, &path).map_err(CliError::Pipeline)?;
    let members: Vec<String> =
        clustering.clusters().iter().map(|c| format!("{{{}}}", c.join(","))).collect();
    println!(
        "cluster: {} subjects -> {} clusters at threshold {:.4} ({}): {}",
        prox.len(),
        clustering.num_clusters,
        threshold,
        linkage.tag(),
        members.join(" ")
    );
    println!("cluster: wrote {}", path.display());
    Ok(())
}

// ── partition ───────────────────────────────────────────────────────────

fn read_superclustering(out: &Path) -> Result<SuperClustering, CliError> {
    let path = superclusters_path(out);
    if !path.exists() {
        return Err(CliError::Pipeline(anyhow!(
            "{} not found; run `hetfed cluster` first",
            path.display()
        )));
    }
    io::read_superclustering_json(&path).map_err(CliError::Pipeline)
}

fn build_partition(
    config: &ExperimentConfig,
    section: &PartitionSection,
    out: &Path,
    seed: u64,
) -> Result<(Partition, DatasetView), CliError> {
    let method = section.method().map_err(CliError::Config)?;
    let pseed = section.seed.unwrap_or(seed);
    let n = section.num_clients;
    let need = |field: Option<usize>, name: &str| {
        field.ok_or_else(|| {
            CliError::Config(anyhow!("partition method {} needs {}", method.tag(), name))
        })
    };
    match method {
        PartitionMethod::Mix => {
            let layout = section.mix_layout.as_ref().ok_or_else(|| {
                CliError::Config(anyhow!("partition method MIX needs mix_layout"))
            })?;
            if layout.len() != config.datasets.len() {
                return Err(CliError::Config(anyhow!(
                    "mix_layout has {} entries for {} datasets",
                    layout.len(),
                    config.datasets.len()
                )));
            }
            let mut views = Vec::with_capacity(config.datasets.len());
            for (i, s) in config.datasets.iter().enumerate() {
                views.push(load_one_dataset(config, s, i, seed).map_err(pipeline)?);
            }
            let tuples: Vec<(usize, usize, usize)> =
                layout.iter().map(|&[c, spc, spcl]| (c, spc, spcl)).collect();
            partition_mix(&views, &tuples, pseed).map_err(pipeline)
        }
        _ => {
            let view = load_primary_dataset(config, seed).map_err(pipeline)?;
            let partition = match method {
                PartitionMethod::Iid => partition_iid(&view, n, pseed).map_err(pipeline)?,
                PartitionMethod::CNiid => {
                    let lpc = need(section.labels_per_client, "labels_per_client")?;
                    partition_cniid(&view, n, lpc, pseed).map_err(pipeline)?
                }
                PartitionMethod::CDir => {
                    let alpha = section.alpha.ok_or_else(|| {
                        CliError::Config(anyhow!("partition method C-DIR needs alpha"))
                    })?;
                    partition_cdir(&view, n, alpha, pseed).map_err(pipeline)?
                }
                PartitionMethod::ScNiid => {
                    let sc = read_superclustering(out)?;
                    let lpc = need(section.labels_per_client, "labels_per_client")?;
                    partition_scniid(&view, &sc, n, lpc, section.shards_per_client, pseed)
                        .map_err(pipeline)?
                }
                PartitionMethod::ScDir => {
                    let sc = read_superclustering(out)?;
                    let alpha = section.alpha.ok_or_else(|| {
                        CliError::Config(anyhow!("partition method SC-DIR needs alpha"))
                    })?;
                    partition_scdir(&view, &sc, n, alpha, pseed).map_err(pipeline)?
                }
                PartitionMethod::Mix => unreachable!(),
            };
            Ok((partition, view))
        }
    }
}

fn partition_measures(
    partition: &Partition,
    view: &DatasetView,
    p: usize,
) -> Vec<(String, f64)> {
    let candidates: [(&str, ClientDistanceMeasure); 4] = [
        ("EMD", ClientDistanceMeasure::Emd(GroundMetric::Discrete)),
        ("EQ2", ClientDistanceMeasure::Eq2 { p }),
        ("EQ3", ClientDistanceMeasure::Eq3 { p }),
        ("CKA", ClientDistanceMeasure::Cka),
    ];
    let mut rows = Vec::new();
    for (name, measure) in candidates {
        match avg_pairwise_client_distance(partition, view, &measure) {
            Ok(v) => rows.push((name.to_string(), v)),
            Err(e) => eprintln!("partition: measure {name} skipped: {e}"),
        }
    }
    rows
}

fn cluster_counts(partition: &Partition) -> Option<Vec<usize>> {
    let clusters = partition.cluster_of_client.as_ref()?;
    let k = clusters.iter().max()? + 1;
    let mut counts = vec![0usize; k];
    for &c in clusters {
        counts[c] += 1;
    }
    Some(counts)
}

/// Builds the configured partition, writes its manifest and its pairwise
/// client-distance measures, and prints the allocation summary.
pub fn cmd_partition(config: &ExperimentConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let section = need_partition_section(config)?;
    let (partition, view) = build_partition(config, section, out, seed)?;
    let tag = file_tag(partition.spec.method);

    let manifest = partition_path(out, &tag);
    io::write_partition_json(&partition, &manifest).map_err(CliError::Pipeline)?;

    let rows = partition_measures(&partition, &view, config.signature.p);
    let measures = measures_path(out, &tag);
    io::write_measures_csv(&rows, &measures).map_err(CliError::Pipeline)?;

    match cluster_counts(&partition) {
        Some(counts) => println!(
            "partition: {} clients via {} over {} super clusters (per-cluster {:?}) -> {}",
            partition.num_clients(),
            partition.spec.method.tag(),
            counts.len(),
            counts,
            manifest.display()
        ),
        None => println!(
            "partition: {} clients via {} -> {}",
            partition.num_clients(),
            partition.spec.method.tag(),
            manifest.display()
        ),
    }
    println!("partition: wrote {}", measures.display());
    Ok(())
}

// ── simulate ────────────────────────────────────────────────────────────

fn architecture_for(section: &FederationSection, view: &DatasetView) -> Architecture {
    match section.architecture.as_str() {
        "mlp" => Architecture::Mlp {
            input_dim: view.feature_dim(),
            hidden_dim: section.hidden_dim,
            num_classes: view.num_classes(),
        },
        _ => Architecture::SoftmaxRegression {
            input_dim: view.feature_dim(),
            num_classes: view.num_classes(),
        },
    }
}

/// The dataset a manifest's indices point into. MIX manifests address the
/// concatenation of every configured dataset; all others address the first.
fn simulation_dataset(
    config: &ExperimentConfig,
    method: PartitionMethod,
    seed: u64,
) -> Result<DatasetView> {
    if method == PartitionMethod::Mix {
        let mut views = Vec::with_capacity(config.datasets.len());
        for (i, s) in config.datasets.iter().enumerate() {
            views.push(load_one_dataset(config, s, i, seed)?);
        }
        Ok(concat_datasets(&views)?)
    } else {
        load_primary_dataset(config, seed)
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_one(
    algorithm: Algorithm,
    arch: Architecture,
    partition: &Partition,
    view: &DatasetView,
    train: &TrainConfig,
    writer: &mut io::RoundLogWriter,
) -> Result<f64> {
    let result = flsim::run_federation(algorithm, arch, partition, view, train)?;
    for log in &result.round_logs {
        for (k, &client) in log.selected.iter().enumerate() {
            writer.write(&io::RoundRow {
                round: log.round,
                client_id: client,
                algorithm: algorithm.tag().to_string(),
                train_loss: log.train_loss[k],
                local_test_acc: log.local_test_acc[k],
            })?;
        }
    }
    writer.flush()?;
    let eval = flsim::finetune_and_evaluate(&result, partition, view, train)?;
    Ok(eval.mean_accuracy)
}

/// Runs every configured algorithm against the stored partition manifest
/// for `repeat_seeds` training seeds, logging rounds per seed and the
/// aggregated accuracy summary.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let psection = need_partition_section(config)?;
    let fsection = need_federation_section(config)?;
    let method = psection.method().map_err(CliError::Config)?;
    let tag = file_tag(method);

    let manifest = partition_path(out, &tag);
    if !manifest.exists() {
        return Err(CliError::Pipeline(anyhow!(
            "{} not found; run `hetfed partition` first",
            manifest.display()
        )));
    }
    let partition = io::read_partition_json(&manifest).map_err(CliError::Pipeline)?;
    if partition.spec.method != method {
        return Err(CliError::Pipeline(anyhow!(
            "manifest {} holds a {} partition but the config says {}",
            manifest.display(),
            partition.spec.method.tag(),
            method.tag()
        )));
    }
    let view = simulation_dataset(config, method, seed).map_err(pipeline)?;
    let algorithms = fsection.algorithms().map_err(CliError::Config)?;
    let arch = architecture_for(fsection, &view);

    let mut finals: Vec<Vec<f64>> = vec![Vec::new(); algorithms.len()];
    for repeat in 0..fsection.repeat_seeds {
        let train_seed = seed + repeat as u64;
        let rounds_path = out.join(format!("rounds_{tag}_s{train_seed}.csv"));
        let mut writer = io::RoundLogWriter::create(&rounds_path).map_err(CliError::Pipeline)?;
        for (a, &algorithm) in algorithms.iter().enumerate() {
            let train = fsection.train_config(train_seed);
            let acc = run_one(algorithm, arch, &partition, &view, &train, &mut writer)
                .map_err(CliError::Pipeline)?;
            finals[a].push(acc);
            println!(
                "simulate: {} seed {} on {}: fine-tuned accuracy {:.4}",
                algorithm.tag(),
                train_seed,
                method.tag(),
                acc
            );
        }
    }

    let rows: Vec<io::SummaryRow> = algorithms
        .iter()
        .zip(&finals)
        .map(|(algorithm, accs)| {
            let (mean, std) = mean_and_std(accs);
            io::SummaryRow {
                algorithm: algorithm.tag().to_string(),
                partition_method: method.tag().to_string(),
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect();
    let summary = summary_path(out, &tag);
    io::write_summary_csv(&rows, &summary).map_err(CliError::Pipeline)?;
    for row in &rows {
        println!(
            "simulate: {} on {}: {:.4} ± {:.4} over {} seeds",
            row.algorithm,
            row.partition_method,
            row.mean_accuracy,
            row.std_accuracy,
            fsection.repeat_seeds
        );
    }
    println!("simulate: wrote {}", summary.display());
    Ok(())
}

// ── report ──────────────────────────────────────────────────────────────

const METHOD_ORDER: [PartitionMethod; 6] = [
    PartitionMethod::Iid,
    PartitionMethod::CNiid,
    PartitionMethod::CDir,
    PartitionMethod::ScNiid,
    PartitionMethod::ScDir,
    PartitionMethod::Mix,
];

const MEASURE_ORDER: [&str; 4] = ["EMD", "EQ2", "EQ3", "CKA"];

const ALGORITHM_ORDER: [&str; 7] =
    ["FEDAVG", "FEDPROX", "FEDNOVA", "SCAFFOLD", "LG", "IFCA", "SOLO"];

/// Joins the per-method measures and accuracy summaries in the output
/// directory into two cross-method tables: measures × methods and
/// algorithms × methods.
pub fn cmd_report(_config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let mut measure_cols: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    let mut summary_cols: Vec<(String, Vec<io::SummaryRow>)> = Vec::new();
    for method in METHOD_ORDER {
        let tag = file_tag(method);
        let mpath = measures_path(out, &tag);
        if mpath.exists() {
            let rows = io::read_measures_csv(&mpath).map_err(CliError::Pipeline)?;
            measure_cols.push((method.tag().to_string(), rows));
        }
        let spath = summary_path(out, &tag);
        if spath.exists() {
            let rows = io::read_summary_csv(&spath).map_err(CliError::Pipeline)?;
            summary_cols.push((method.tag().to_string(), rows));
        }
    }
    if measure_cols.is_empty() && summary_cols.is_empty() {
        return Err(CliError::Pipeline(anyhow!(
            "nothing to report under {}: expected measures_<method>.csv from `hetfed partition` \
             and/or summary_<method>.csv from `hetfed simulate` (methods: {})",
            out.display(),
            METHOD_ORDER.map(|m| file_tag(m)).join(", ")
        )));
    }

    let mut wrote = Vec::new();
    if !measure_cols.is_empty() {
        let columns: Vec<String> = measure_cols.iter().map(|(m, _)| m.clone()).collect();
        let mut rows: Vec<String> =
            MEASURE_ORDER.iter().map(|m| m.to_string()).collect();
        rows.retain(|m| measure_cols.iter().any(|(_, rs)| rs.iter().any(|(n, _)| n == m)));
        let path = out.join("report_measures.csv");
        io::write_grid_csv(
            "measure",
            &columns,
            &rows,
            |measure, method| {
                measure_cols
                    .iter()
                    .find(|(m, _)| m == method)
                    .and_then(|(_, rs)| rs.iter().find(|(n, _)| n == measure))
                    .map(|(_, v)| format!("{v:.6}"))
            },
            &path,
        )
        .map_err(CliError::Pipeline)?;
        wrote.push(path);
    }
    if !summary_cols.is_empty() {
        let columns: Vec<String> = summary_cols.iter().map(|(m, _)| m.clone()).collect();
        let mut rows: Vec<String> =
            ALGORITHM_ORDER.iter().map(|a| a.to_string()).collect();
        rows.retain(|a| summary_cols.iter().any(|(_, rs)| rs.iter().any(|r| &r.algorithm == a)));
        let path = out.join("report_accuracy.csv");
        io::write_grid_csv(
            "algorithm",
            &columns,
            &rows,
            |algorithm, method| {
                summary_cols
                    .iter()
                    .find(|(m, _)| m == method)
                    .and_then(|(_, rs)| rs.iter().find(|r| r.algorithm == algorithm))
                    .map(|r| format!("{:.4}±{:.4}", r.mean_accuracy, r.std_accuracy))
            },
            &path,
        )
        .map_err(CliError::Pipeline)?;
        wrote.push(path);
    }
    let names: Vec<String> = wrote.iter().map(|p| p.display().to_string()).collect();
    println!("report: wrote {}", names.join(", "));
    Ok(())
}
