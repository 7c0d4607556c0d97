//! Semi-supervised training at a 10% label budget against the same split
//! trained from scratch.
//!
//! Usage: cargo run --release --example train_semisupervised [epochs] [seed]

use subgraph_gcl::graph::{make_synthetic, SyntheticKind};
use subgraph_gcl::partition::partition_dataset;
use subgraph_gcl::train::{supervised_baseline, train_semisupervised, Regime, TrainConfig};

fn main() -> subgraph_gcl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let dataset = make_synthetic(SyntheticKind::MotifVsRandom, 200, 20, 0)?;
    let cfg = TrainConfig {
        regime: Regime::SemiSupervised,
        epochs,
        seed,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let partitions = partition_dataset(&dataset, cfg.partition_algo()?, cfg.seed);

    let pre = train_semisupervised(&dataset, &partitions, 0.1, &cfg)?;
    let base = supervised_baseline(&dataset, 0.1, &cfg)?;
    let acc = |o: &subgraph_gcl::train::TrainOutcome| o.report.eval.as_ref().map_or(f64::NAN, |e| e.mean);
    println!("pre-trained {:.3}  from scratch {:.3}", acc(&pre), acc(&base));
    Ok(())
}
