//! Unsupervised training on the synthetic motif corpus, then a linear probe.
//!
//! Usage: cargo run --release --example train_unsupervised [epochs] [seed]

use std::time::Instant;

use subgraph_gcl::graph::{make_synthetic, SyntheticKind};
use subgraph_gcl::partition::partition_dataset;
use subgraph_gcl::train::{train_unsupervised, TrainConfig};

fn main() -> subgraph_gcl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let dataset = make_synthetic(SyntheticKind::MotifVsRandom, 200, 20, 0)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let partitions = partition_dataset(&dataset, cfg.partition_algo()?, cfg.seed);

    let start = Instant::now();
    let out = train_unsupervised(&dataset, &partitions, &cfg)?;
    for e in out.report.epochs.iter().step_by((epochs / 10).max(1)) {
        println!(
            "epoch {:>3}  cl {:.4}  sim {:.4}  {:.2}s",
            e.epoch, e.loss.cl, e.loss.sim, e.wall_clock_s
        );
    }
    if let Some(eval) = &out.report.eval {
        println!("linear probe: {:.3} ± {:.3}", eval.mean, eval.std);
    }
    println!("total {:.1}s, report hash {}", start.elapsed().as_secs_f64(), out.report.report_hash);
    Ok(())
}
