//! Trains briefly on the bundled MUTAG copy and reads per-subgraph importance
//! from the first view generator.
//!
//! Also reports an exploratory statistic: among mutagenic graphs that carry a
//! nitro group (N bonded to two O), how often the subgraphs holding it get an
//! above-median keep probability. Not a gate; the number moves with seed and epochs.
//!
//! Usage: cargo run --release --example export_importance [epochs] [seed]

use subgraph_gcl::graph::{load_tudataset, Graph};
use subgraph_gcl::partition::partition_dataset;
use subgraph_gcl::train::{train_unsupervised, TrainConfig};
use subgraph_gcl::viewgen::subgraph_importance;

// One-hot columns of the MUTAG node labels.
const N: usize = 1;
const O: usize = 2;

fn atom(g: &Graph, v: usize) -> usize {
    let row = g.features().row(v);
    (0..row.len()).find(|&j| row[j] == 1.0).unwrap_or(usize::MAX)
}

fn nitro_nodes(g: &Graph) -> Vec<usize> {
    let adj = g.adjacency();
    let mut out = Vec::new();
    for v in 0..g.num_nodes() {
        let oxygens: Vec<usize> = adj[v].iter().copied().filter(|&u| atom(g, u) == O).collect();
        if atom(g, v) == N && oxygens.len() >= 2 {
            out.push(v);
            out.extend(oxygens);
        }
    }
    out
}

fn main() -> subgraph_gcl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let dataset = load_tudataset(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/MUTAG"))?;
    let cfg = TrainConfig {
        epochs,
        seed,
        probe_folds: 0,
        ..TrainConfig::default()
    };
    let partitions = partition_dataset(&dataset, cfg.partition_algo()?, cfg.seed);
    let out = train_unsupervised(&dataset, &partitions, &cfg)?;
    let model = &out.model;

    let (mut eligible, mut above) = (0, 0);
    for (i, (g, p)) in dataset.graphs().iter().zip(&partitions).enumerate() {
        let imp = subgraph_importance(&model.store, &model.generators[0], g, i, p)?;
        if i == 0 {
            println!("{}", serde_json::to_string_pretty(&imp)?);
        }
        let nitro = nitro_nodes(g);
        if g.label() != Some(1) || nitro.is_empty() || imp.subgraphs.len() < 2 {
            continue;
        }
        let mut keeps: Vec<f64> = imp.subgraphs.iter().map(|s| s.keep_prob).collect();
        keeps.sort_by(f64::total_cmp);
        let median = if keeps.len() % 2 == 1 {
            keeps[keeps.len() / 2]
        } else {
            (keeps[keeps.len() / 2 - 1] + keeps[keeps.len() / 2]) / 2.0
        };
        let holding: Vec<f64> = imp
            .subgraphs
            .iter()
            .filter(|s| s.nodes.iter().any(|v| nitro.contains(v)))
            .map(|s| s.keep_prob)
            .collect();
        eligible += 1;
        if holding.iter().sum::<f64>() / holding.len() as f64 > median {
            above += 1;
        }
    }
    println!(
        "nitro subgraphs above the median keep probability in {above} of {eligible} mutagenic graphs ({:.2})",
        above as f64 / eligible.max(1) as f64
    );
    Ok(())
}
