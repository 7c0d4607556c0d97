//! Louvain and Girvan–Newman statistics for a TUDataset directory or a synthetic corpus.
//!
//! Usage: cargo run --release --example partition_stats [dataset-dir | synthetic:<kind>]

use subgraph_gcl::cli::{resolve_dataset, SyntheticArgs};
use subgraph_gcl::partition::{modularity, partition_dataset, stats_of, PartitionAlgo};

fn main() -> subgraph_gcl::Result<()> {
    let spec = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/MUTAG").to_string());
    let dataset = resolve_dataset(
        &spec,
        SyntheticArgs {
            synthetic_graphs: 200,
            synthetic_nodes: 20,
            data_seed: 0,
        },
    )?;
    println!("{}: {} graphs, avg nodes {:.2}", dataset.name, dataset.len(), dataset.avg_nodes());
    for algo in ["louvain", "gn:first-split", "gn"] {
        let algo: PartitionAlgo = algo.parse()?;
        let parts = partition_dataset(&dataset, algo, 0);
        let q = parts
            .iter()
            .zip(dataset.graphs())
            .map(|(p, g)| modularity(g, p))
            .sum::<f64>()
            / dataset.len() as f64;
        println!(
            "{:<16} avg subgraphs {:.2}  mean modularity {:.3}",
            algo.to_string(),
            stats_of(&dataset, &parts).avg_subgraphs,
            q
        );
    }
    Ok(())
}
