//! End-to-end checks on the `hetfed` binary: the five-stage pipeline on a
//! synthetic dataset, determinism of its artifacts, flag overrides, and the
//! exit-code contract (0 success, 1 pipeline failure, 2 config failure).

use std::fs;
use std::path::Path;
use std::process::Output;

fn hetfed(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_hetfed"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning the hetfed binary")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = hetfed(dir, args);
    assert!(
        out.status.success(),
        "hetfed {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn expect_exit(dir: &Path, args: &[&str], code: i32) -> String {
    let out = hetfed(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "hetfed {:?} exit {:?}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth_dataset_toml() -> &'static str {
    "[[datasets]]\n\
     name = \"synth\"\n\
     format = \"synth\"\n\
     clusters = 2\n\
     classes_per_cluster = 3\n\
     samples_per_class = 40\n\
     ambient_dim = 24\n\
     within_angle = 25.0\n\
     across_angle = 85.0\n\
     noise = 0.02\n"
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("exp.toml"), body).unwrap();
}

fn full_config(out_dir: &Path) -> String {
    format!(
        "seed = 7\n\n{}\n\
         [signature]\np = 2\n\n\
         [clustering]\nthreshold = \"auto\"\nlinkage = \"average\"\nsource = \"eq2\"\n\n\
         [partition]\nmethod = \"sc-niid\"\nnum_clients = 6\nlabels_per_client = 2\n\n\
         [federation]\nalgorithms = [\"fedavg\", \"fedprox\", \"solo\"]\n\
         architecture = \"softmax\"\nrounds = 2\nlocal_epochs = 2\nbatch_size = 10\n\
         repeat_seeds = 2\n\n\
         [output]\ndir = {:?}\n",
        synth_dataset_toml(),
        out_dir.to_str().unwrap()
    )
}

fn run_full_pipeline(dir: &Path, out_dir: &Path) {
    write_config(dir, &full_config(out_dir));
    for cmd in ["profile", "cluster", "partition", "simulate", "report"] {
        run_ok(dir, &[cmd, "--config", "exp.toml"]);
    }
}

#[test]
fn pipeline_writes_every_stage_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_full_pipeline(dir.path(), &out);

    for name in [
        "class_proximity_eq2.csv",
        "class_proximity_eq3.csv",
        "superclusters.json",
        "partition_sc-niid.json",
        "measures_sc-niid.csv",
        "rounds_sc-niid_s7.csv",
        "rounds_sc-niid_s8.csv",
        "summary_sc-niid.csv",
        "report_measures.csv",
        "report_accuracy.csv",
    ] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }
}

#[test]
fn pipeline_artifacts_are_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let out_a = dir_a.path().join("out");
    let out_b = dir_b.path().join("out");
    run_full_pipeline(dir_a.path(), &out_a);
    run_full_pipeline(dir_b.path(), &out_b);

    for name in [
        "class_proximity_eq2.csv",
        "superclusters.json",
        "partition_sc-niid.json",
        "measures_sc-niid.csv",
        "rounds_sc-niid_s7.csv",
        "summary_sc-niid.csv",
        "report_measures.csv",
        "report_accuracy.csv",
    ] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
}

#[test]
fn relative_output_dir_resolves_against_working_directory() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 1\n\n{}\n[output]\ndir = \"artifacts\"\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);
    run_ok(dir.path(), &["profile", "--config", "exp.toml"]);
    assert!(dir.path().join("artifacts/class_proximity_eq2.csv").exists());
}

#[test]
fn out_flag_overrides_configured_directory() {
    let dir = tempfile::tempdir().unwrap();
    let elsewhere = dir.path().join("elsewhere");
    let body = format!(
        "seed = 1\n\n{}\n[output]\ndir = \"artifacts\"\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);
    run_ok(
        dir.path(),
        &["profile", "--config", "exp.toml", "--out", elsewhere.to_str().unwrap()],
    );
    assert!(elsewhere.join("class_proximity_eq2.csv").exists());
    assert!(!dir.path().join("artifacts").exists());
}

#[test]
fn seed_flag_changes_the_partition() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let body = format!(
        "seed = 1\n\n{}\n[partition]\nmethod = \"iid\"\nnum_clients = 4\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);
    for (out, seed) in [(&out_a, "3"), (&out_b, "4")] {
        let out = out.to_str().unwrap();
        run_ok(dir.path(), &["partition", "--config", "exp.toml", "--out", out, "--seed", seed]);
    }
    let a = fs::read(out_a.join("partition_iid.json")).unwrap();
    let b = fs::read(out_b.join("partition_iid.json")).unwrap();
    assert_ne!(a, b, "different seeds produced identical partitions");
}

#[test]
fn fedprox_with_zero_mu_reproduces_fedavg() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let body = format!(
        "seed = 5\n\n{}\n\
         [partition]\nmethod = \"iid\"\nnum_clients = 4\n\n\
         [federation]\nalgorithms = [\"fedavg\", \"fedprox\"]\nmu = 0.0\n\
         rounds = 2\nlocal_epochs = 2\nbatch_size = 10\n\n\
         [output]\ndir = {:?}\n",
        synth_dataset_toml(),
        out.to_str().unwrap()
    );
    write_config(dir.path(), &body);
    run_ok(dir.path(), &["partition", "--config", "exp.toml"]);
    run_ok(dir.path(), &["simulate", "--config", "exp.toml"]);

    let summary = fs::read_to_string(out.join("summary_iid.csv")).unwrap();
    let tail = |prefix: &str| {
        summary
            .lines()
            .find(|l| l.starts_with(prefix))
            .unwrap_or_else(|| panic!("no {prefix} row in {summary}"))
            .strip_prefix(prefix)
            .unwrap()
            .to_string()
    };
    assert_eq!(tail("FEDAVG,"), tail("FEDPROX,"));

    let rounds = fs::read_to_string(out.join("rounds_iid_s5.csv")).unwrap();
    let rows_of = |tag: &str| -> Vec<String> {
        rounds
            .lines()
            .filter(|l| l.split(',').nth(2) == Some(tag))
            .map(|l| {
                let mut fields: Vec<&str> = l.split(',').collect();
                fields.remove(2);
                fields.join(",")
            })
            .collect()
    };
    let fedavg = rows_of("FEDAVG");
    assert!(!fedavg.is_empty());
    assert_eq!(fedavg, rows_of("FEDPROX"), "per-round logs diverged");
}

#[test]
fn config_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();

    write_config(dir.path(), "seed = [\n");
    let err = expect_exit(dir.path(), &["profile", "--config", "exp.toml"], 2);
    assert!(err.contains("config error"), "got: {err}");

    let body = format!("{}\n[signature]\nrank = 3\n", synth_dataset_toml());
    write_config(dir.path(), &body);
    let err = expect_exit(dir.path(), &["profile", "--config", "exp.toml"], 2);
    assert!(err.contains("config error"), "got: {err}");

    let body = format!(
        "{}\n[partition]\nmethod = \"iid\"\nnum_clients = 4\n\n\
         [federation]\nalgorithms = [\"sgd\"]\nrounds = 1\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);
    let err = expect_exit(dir.path(), &["simulate", "--config", "exp.toml"], 2);
    assert!(err.contains("unknown algorithm"), "got: {err}");

    let body = format!(
        "{}\n[clustering]\nthreshold = \"biggest\"\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);
    let err = expect_exit(dir.path(), &["cluster", "--config", "exp.toml"], 2);
    assert!(err.contains("threshold"), "got: {err}");
}

#[test]
fn commands_needing_absent_sections_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), synth_dataset_toml());

    let err = expect_exit(dir.path(), &["partition", "--config", "exp.toml"], 2);
    assert!(err.contains("[partition] section"), "got: {err}");

    let body = format!(
        "{}\n[partition]\nmethod = \"iid\"\nnum_clients = 4\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);
    let err = expect_exit(dir.path(), &["simulate", "--config", "exp.toml"], 2);
    assert!(err.contains("[federation] section"), "got: {err}");
}

#[test]
fn missing_upstream_artifacts_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 7\n\n{}\n\
         [partition]\nmethod = \"sc-niid\"\nnum_clients = 6\nlabels_per_client = 2\n\n\
         [federation]\nalgorithms = [\"fedavg\"]\nrounds = 1\n",
        synth_dataset_toml()
    );
    write_config(dir.path(), &body);

    let err = expect_exit(dir.path(), &["cluster", "--config", "exp.toml"], 1);
    assert!(err.contains("run `hetfed profile` first"), "got: {err}");

    let err = expect_exit(dir.path(), &["partition", "--config", "exp.toml"], 1);
    assert!(err.contains("run `hetfed cluster` first"), "got: {err}");

    let err = expect_exit(dir.path(), &["simulate", "--config", "exp.toml"], 1);
    assert!(err.contains("run `hetfed partition` first"), "got: {err}");

    let err = expect_exit(dir.path(), &["report", "--config", "exp.toml"], 1);
    assert!(
        err.contains("measures_") && err.contains("summary_") && err.contains("sc-dir"),
        "report error should name the files it expected, got: {err}"
    );
}

#[test]
fn simulate_rejects_manifest_from_another_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let body = |method: &str| {
        format!(
            "seed = 7\n\n{}\n\
             [partition]\nmethod = {:?}\nnum_clients = 4\nlabels_per_client = 2\n\n\
             [federation]\nalgorithms = [\"fedavg\"]\nrounds = 1\nlocal_epochs = 1\n\n\
             [output]\ndir = {:?}\n",
            synth_dataset_toml(),
            method,
            out.to_str().unwrap()
        )
    };
    write_config(dir.path(), &body("iid"));
    run_ok(dir.path(), &["partition", "--config", "exp.toml"]);
    fs::rename(out.join("partition_iid.json"), out.join("partition_c-niid.json")).unwrap();
    write_config(dir.path(), &body("c-niid"));
    let err = expect_exit(dir.path(), &["simulate", "--config", "exp.toml"], 1);
    assert!(err.contains("holds a IID partition"), "got: {err}");
}
