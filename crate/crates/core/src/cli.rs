//! Command-line front end: `partition`, `train` and `export-importance`.
//!
//! Every command writes into an output directory and drops a
//! `manifest.json` there. Exit codes: 0 ok, 2 ingestion, 3 config,
//! 4 divergence, 5 compatibility, 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_tudataset, make_synthetic, Dataset, DatasetManifest, SyntheticKind};
use crate::partition::{partition_dataset, stats_of, PartitionAlgo, PartitionCache, PartitionStats};
use crate::train::{
    sha256_hex, train_semisupervised, train_unsupervised, Checkpoint, Regime, RunReport, TrainConfig,
};
use crate::viewgen::{subgraph_importance, GraphImportance, Strategy};

/// Dataset root consulted for dataset names that are not existing paths.
pub const DATA_ENV: &str = "SUBGRAPH_GCL_DATA";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMPORTANCE_FORMAT: &str = "subgraph-gcl/importance";

#[derive(Debug, Parser)]
#[command(name = "subgraph-gcl", version, about = "Subgraph-oriented learnable augmentation for graph contrastive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition every graph of a dataset and write the cache and statistics.
    Partition {
        /// TUDataset directory, a name under $SUBGRAPH_GCL_DATA, or `synthetic:<kind>`.
        dataset: String,
        /// louvain, louvain@<resolution>, gn, gn:first-split or gn:k=<k>.
        #[arg(long, default_value = "louvain")]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synthetic: SyntheticArgs,
    },
    /// Run the regime described by a TOML config.
    Train {
        #[arg(required_unless_present = "print_defaults")]
        config: Option<PathBuf>,
        /// Validate the config, load and partition the dataset, then stop.
        #[arg(long)]
        dry_run: bool,
        /// Print the default config as TOML and exit.
        #[arg(long)]
        print_defaults: bool,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Per-subgraph keep probabilities and strategy distributions from a checkpoint.
    ExportImportance {
        checkpoint: PathBuf,
        dataset: String,
        #[arg(long)]
        out: PathBuf,
        /// Which view generator to read (1 or 2).
        #[arg(long, default_value_t = 1)]
        generator: usize,
    },
}

#[derive(Debug, Clone, Copy, clap::Args)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 200)]
    pub synthetic_graphs: usize,
    #[arg(long, default_value_t = 20)]
    pub synthetic_nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

impl SyntheticArgs {
    fn from_config(cfg: &TrainConfig) -> Self {
        SyntheticArgs {
            synthetic_graphs: cfg.synthetic_graphs,
            synthetic_nodes: cfg.synthetic_nodes,
            data_seed: cfg.data_seed,
        }
    }
}

/// What a command was asked to do. Every artifact in the output directory
/// carries `config_hash`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub dataset: String,
    pub output_dir: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub config_hash: String,
    pub algorithm: String,
    pub seed: u64,
    pub dataset: DatasetManifest,
    #[serde(flatten)]
    pub stats: PartitionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceExport {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub generator: usize,
    pub strategies: Vec<String>,
    pub graphs: Vec<GraphImportance>,
}

/// Loads `spec`: `synthetic:<kind>`, an existing directory, or a name under [`DATA_ENV`].
pub fn resolve_dataset(spec: &str, synthetic: SyntheticArgs) -> Result<Dataset> {
    if let Some(kind) = spec.strip_prefix("synthetic:") {
        let kind = SyntheticKind::from_str(kind).map_err(|e| Error::ingest(spec, None, e.to_string()))?;
        return make_synthetic(kind, synthetic.synthetic_graphs, synthetic.synthetic_nodes, synthetic.data_seed);
    }
    let direct = PathBuf::from(spec);
    let path = match std::env::var_os(DATA_ENV) {
        Some(root) if !direct.exists() && !direct.is_absolute() => Path::new(&root).join(spec),
        _ => direct,
    };
    load_tudataset(&path)
}

fn config_error(key: &str, e: Error) -> Error {
    Error::Config {
        key: key.into(),
        msg: e.to_string(),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    write(dir, MANIFEST_FILE, &(serde_json::to_string_pretty(manifest)? + "\n"))
}

pub fn cmd_partition(dataset: &str, algo: &str, seed: u64, out: &Path, synthetic: SyntheticArgs) -> Result<PartitionReport> {
    let algo = PartitionAlgo::from_str(algo).map_err(|e| config_error("algo", e))?;
    let ds = resolve_dataset(dataset, synthetic)?;
    if ds.is_empty() {
        return Err(Error::ingest(dataset, None, "dataset has no graphs"));
    }
    let partitions = partition_dataset(&ds, algo, seed);
    let cache = PartitionCache::new(&ds, algo, seed, &partitions);
    let config_hash = sha256_hex(
        serde_json::to_string(&(dataset, algo.to_string(), seed, synthetic.synthetic_graphs, synthetic.synthetic_nodes, synthetic.data_seed))?
            .as_bytes(),
    );
    let report = PartitionReport {
        config_hash: config_hash.clone(),
        algorithm: algo.to_string(),
        seed,
        dataset: ds.manifest(),
        stats: stats_of(&ds, &partitions),
    };
    fs::create_dir_all(out)?;
    cache.save(out.join("partitions.json"))?;
    write(out, "stats.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_manifest(
        out,
        &RunManifest {
            command: "partition".into(),
            config_path: None,
            dataset: dataset.into(),
            output_dir: out.display().to_string(),
            seed,
            config_hash,
        },
    )?;
    Ok(report)
}

/// Outcome of `train`; `report` is `None` for a dry run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub manifest: RunManifest,
    pub partition: PartitionStats,
    pub report: Option<RunReport>,
}

pub fn cmd_train(config: &Path, dry_run: bool, out: &Path) -> Result<TrainRun> {
    let text = fs::read_to_string(config).map_err(|e| Error::Config {
        key: "<file>".into(),
        msg: format!("{}: {e}", config.display()),
    })?;
    let cfg = TrainConfig::from_toml(&text)?;
    let ds = resolve_dataset(&cfg.dataset, SyntheticArgs::from_config(&cfg))?;
    let partitions = partition_dataset(&ds, cfg.partition_algo()?, cfg.seed);
    let manifest = RunManifest {
        command: if dry_run { "train --dry-run" } else { "train" }.into(),
        config_path: Some(config.display().to_string()),
        dataset: cfg.dataset.clone(),
        output_dir: out.display().to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    let partition = stats_of(&ds, &partitions);
    fs::create_dir_all(out)?;
    write_manifest(out, &manifest)?;
    if dry_run {
        return Ok(TrainRun {
            manifest,
            partition,
            report: None,
        });
    }
    let outcome = match cfg.regime {
        Regime::Unsupervised => train_unsupervised(&ds, &partitions, &cfg)?,
        Regime::SemiSupervised => train_semisupervised(&ds, &partitions, cfg.label_fraction, &cfg)?,
    };
    write(out, "report.json", &outcome.report.to_json()?)?;
    write(out, "metrics.csv", &outcome.report.metrics_csv())?;
    write(out, "checkpoint.json", &Checkpoint::from_outcome(&outcome).to_json()?)?;
    Ok(TrainRun {
        manifest,
        partition,
        report: Some(outcome.report),
    })
}

pub fn cmd_export_importance(checkpoint: &Path, dataset: &str, out: &Path, generator: usize) -> Result<ImportanceExport> {
    if !(1..=2).contains(&generator) {
        return Err(Error::Config {
            key: "generator".into(),
            msg: format!("must be 1 or 2, got {generator}"),
        });
    }
    let text = fs::read_to_string(checkpoint)?;
    let ck = Checkpoint::from_json(&text).map_err(|e| match e {
        Error::Json(e) => Error::Compatibility(format!("unreadable checkpoint: {e}")),
        other => other,
    })?;
    let ds = resolve_dataset(dataset, SyntheticArgs::from_config(&ck.config))?;
    if ds.feature_dim() != ck.input_dim {
        return Err(Error::Compatibility(format!(
            "checkpoint expects {} node features, dataset `{}` has {}",
            ck.input_dim,
            ds.name,
            ds.feature_dim()
        )));
    }
    let model = ck.model()?;
    let partitions = partition_dataset(&ds, ck.config.partition_algo()?, ck.config.seed);
    let gen = &model.generators[generator - 1];
    let graphs = ds
        .graphs()
        .iter()
        .zip(&partitions)
        .enumerate()
        .map(|(i, (g, p))| subgraph_importance(&model.store, gen, g, i, p))
        .collect::<Result<Vec<_>>>()?;
    let export = ImportanceExport {
        format: IMPORTANCE_FORMAT.into(),
        version: 1,
        config_hash: ck.config_hash.clone(),
        generator,
        strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
        graphs,
    };
    fs::create_dir_all(out)?;
    write(out, "importance.json", &(serde_json::to_string(&export)? + "\n"))?;
    write_manifest(
        out,
        &RunManifest {
            command: "export-importance".into(),
            config_path: Some(checkpoint.display().to_string()),
            dataset: dataset.into(),
            output_dir: out.display().to_string(),
            seed: ck.config.seed,
            config_hash: ck.config_hash,
        },
    )?;
    Ok(export)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Ingestion { .. } => 2,
        Error::Config { .. } => 3,
        Error::Divergence(_) => 4,
        Error::Compatibility(_) => 5,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Partition {
            dataset,
            algo,
            seed,
            out,
            synthetic,
        } => {
            let r = cmd_partition(&dataset, &algo, seed, &out, synthetic)?;
            println!(
                "{}: {} graphs, avg nodes {:.2}, avg subgraphs ({}) {:.2}",
                r.dataset.name, r.dataset.num_graphs, r.stats.avg_nodes, r.algorithm, r.stats.avg_subgraphs
            );
        }
        Command::Train {
            print_defaults: true, ..
        } => print!("{}", TrainConfig::default().to_toml()),
        Command::Train {
            config, dry_run, out, ..
        } => {
            let config = config.expect("clap requires a config without --print-defaults");
            let run = cmd_train(&config, dry_run, &out)?;
            match run.report {
                None => println!(
                    "config ok ({}); avg subgraphs {:.2}; dry run, no training",
                    run.manifest.config_hash, run.partition.avg_subgraphs
                ),
                Some(report) => {
                    let last = report.epochs.last().map(|e| e.loss.total).unwrap_or(f64::NAN);
                    match &report.eval {
                        Some(ev) => println!(
                            "final: loss {last:.4} | {} {:.4} ± {:.4} | report {}",
                            ev.protocol, ev.mean, ev.std, report.report_hash
                        ),
                        None => println!("final: loss {last:.4} | no eval | report {}", report.report_hash),
                    }
                }
            }
        }
        Command::ExportImportance {
            checkpoint,
            dataset,
            out,
            generator,
        } => {
            let ex = cmd_export_importance(&checkpoint, &dataset, &out, generator)?;
            println!("wrote importance for {} graphs to {}", ex.graphs.len(), out.join("importance.json").display());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Argument errors count as configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
