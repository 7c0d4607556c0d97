use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subgraph_gcl::cli::{ImportanceExport, PartitionReport, RunManifest};
use subgraph_gcl::partition::PartitionCache;
use subgraph_gcl::train::{Checkpoint, RunReport, TrainConfig};

const BIN: &str = env!("CARGO_BIN_EXE_subgraph-gcl");

fn mutag() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/MUTAG")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("SUBGRAPH_GCL_DATA").output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn read<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = "epochs = 2\nsynthetic_graphs = 24\nsynthetic_nodes = 10\nbatch_size = 8\n\
                     layers = 2\nhidden_dim = 8\nprojection_dim = 8\nprobe_folds = 4\n";

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn train(dir: &Path, body: &str, out: &str) -> Output {
    let cfg = write_config(dir, body);
    run(&["train", cfg.to_str().unwrap(), "--out", dir.join(out).to_str().unwrap()])
}

#[test]
fn partition_mutag_matches_reference_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = run(&["partition", mutag().to_str().unwrap(), "--algo", "louvain", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stats: PartitionReport = read(out.join("stats.json"));
    assert!((stats.stats.avg_nodes - 17.93).abs() < 0.02);
    assert!((3.5..=4.4).contains(&stats.stats.avg_subgraphs), "{}", stats.stats.avg_subgraphs);
    let manifest: RunManifest = read(out.join("manifest.json"));
    assert_eq!(manifest.config_hash, stats.config_hash);
    let cache = PartitionCache::load(out.join("partitions.json")).unwrap();
    assert_eq!(cache.assignments.len(), 188);

    let gn = tmp.path().join("gn");
    assert!(run(&["partition", mutag().to_str().unwrap(), "--algo", "gn:first-split", "--out", gn.to_str().unwrap()]).status.success());
    let stats: PartitionReport = read(gn.join("stats.json"));
    assert!((stats.stats.avg_subgraphs - 2.0).abs() < 1e-12);
}

#[test]
fn partition_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let files: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|d| {
            let out = tmp.path().join(d);
            let o = run(&["partition", "synthetic:motif", "--seed", "3", "--synthetic-graphs", "30", "--out", out.to_str().unwrap()]);
            assert!(o.status.success());
            fs::read(out.join("partitions.json")).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
}

#[test]
fn partition_ingestion_and_flag_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("o");
    let o = run(&["partition", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("ingestion"));

    let o = run(&["partition", "synthetic:no-such-kind", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["partition", mutag().to_str().unwrap(), "--algo", "spectral", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("algo"));
}

#[test]
fn dataset_names_resolve_under_the_data_root() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = Command::new(BIN)
        .args(["partition", "MUTAG", "--out", out.to_str().unwrap()])
        .env("SUBGRAPH_GCL_DATA", mutag().parent().unwrap())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(read::<PartitionReport>(out.join("stats.json")).dataset.num_graphs, 188);
}

#[test]
fn train_writes_report_metrics_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train(tmp.path(), SMALL, "run");
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("final:"));
    let dir = tmp.path().join("run");
    let manifest: RunManifest = read(dir.join("manifest.json"));
    let report = RunReport::from_json(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config_hash, manifest.config_hash);
    assert_eq!(report.report_hash, report.compute_hash());
    assert_eq!(report.epochs.len(), 2);
    assert!(report.eval.is_some());
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("epoch,"));
    let ck = Checkpoint::from_json(&fs::read_to_string(dir.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ck.config_hash, manifest.config_hash);
    assert_eq!(ck.epochs_done, 2);
}

#[test]
fn train_is_deterministic_across_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let hashes: Vec<String> = ["a", "b"]
        .iter()
        .map(|d| {
            assert!(train(tmp.path(), SMALL, d).status.success());
            RunReport::from_json(&fs::read_to_string(tmp.path().join(d).join("report.json")).unwrap())
                .unwrap()
                .report_hash
        })
        .collect();
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn train_semi_supervised_regime_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}regime = \"semi-supervised\"\nlabel_fraction = 0.25\nfinetune_epochs = 2\n");
    let o = train(tmp.path(), &body, "run");
    assert!(o.status.success(), "{}", text(&o.stderr));
    let report = RunReport::from_json(&fs::read_to_string(tmp.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report.finetune_loss.len(), 2);
    assert_eq!(report.eval.unwrap().protocol, "holdout-accuracy");
}

#[test]
fn train_config_errors_exit_3_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train(tmp.path(), "lrr = 0.1\n", "run");
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("lrr"));
    assert!(!tmp.path().join("run").exists());

    let o = train(tmp.path(), "batch_size = \"many\"\n", "run");
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("batch_size"));

    let o = run(&["train", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train(tmp.path(), &format!("{SMALL}lr = 1e300\n"), "run");
    assert_eq!(o.status.code(), Some(4), "{}", text(&o.stderr));
}

#[test]
fn dry_run_validates_and_partitions_without_training() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("dry");
    let o = run(&["train", cfg.to_str().unwrap(), "--dry-run", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("dry run"));
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("report.json").exists());
    assert!(!out.join("checkpoint.json").exists());
}

#[test]
fn printed_defaults_parse_back_to_the_defaults() {
    let o = run(&["train", "--print-defaults"]);
    assert!(o.status.success());
    assert_eq!(TrainConfig::from_toml(&text(&o.stdout)).unwrap(), TrainConfig::default());
}

#[test]
fn export_importance_emits_probabilities() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(train(tmp.path(), SMALL, "run").status.success());
    let ck = tmp.path().join("run/checkpoint.json");
    let out = tmp.path().join("imp");
    let o = run(&["export-importance", ck.to_str().unwrap(), "synthetic:motif-vs-random", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let export: ImportanceExport = read(out.join("importance.json"));
    let manifest: RunManifest = read(out.join("manifest.json"));
    assert_eq!(export.config_hash, manifest.config_hash);
    assert_eq!(export.graphs.len(), 24);
    assert_eq!(export.strategies.len(), 5);
    for g in &export.graphs {
        for s in &g.subgraphs {
            assert!((0.0..=1.0).contains(&s.keep_prob));
            assert!((s.strategy_probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
    let again: ImportanceExport = serde_json::from_str(&serde_json::to_string(&export).unwrap()).unwrap();
    assert_eq!(again, export);

    let o = run(&["export-importance", ck.to_str().unwrap(), mutag().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn export_importance_rejects_foreign_files() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("ck.json");
    fs::write(&bogus, "{\"format\": \"something-else\", \"version\": 1}").unwrap();
    let out = tmp.path().join("o");
    let o = run(&["export-importance", bogus.to_str().unwrap(), "synthetic:motif", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    fs::write(&bogus, "not json").unwrap();
    let o = run(&["export-importance", bogus.to_str().unwrap(), "synthetic:motif", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}
