//! Two views of one graph from an untrained generator, plus the identity draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subgraph_gcl::autodiff::{ParamStore, Tape};
use subgraph_gcl::encoder::GinConfig;
use subgraph_gcl::graph::{make_synthetic, SyntheticKind};
use subgraph_gcl::partition::{partition_graph, PartitionAlgo};
use subgraph_gcl::viewgen::{generate_view, DrawOverride, ViewGenerator, ViewOptions};

fn main() -> subgraph_gcl::Result<()> {
    let dataset = make_synthetic(SyntheticKind::MotifVsRandom, 2, 14, 1)?;
    let g = &dataset.graphs()[1];
    let partition = partition_graph(g, PartitionAlgo::default(), 0, 0);
    println!("graph: {} nodes, {} edges, {} subgraphs {:?}", g.num_nodes(), g.num_edges(), partition.k(), partition.all_members());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let gen = ViewGenerator::new(&mut store, "gen", GinConfig::new(g.feature_dim()), &mut rng)?;

    for round in 0..2 {
        let tape = Tape::new();
        let view = generate_view(&tape, &store, &gen, g, &partition, &ViewOptions::default(), &mut rng)?;
        println!("view {round}:");
        println!("  sampled  {:?}", view.choices);
        println!("  applied  {:?}", view.applied);
        println!("  nodes kept {} / {}", view.surviving_nodes().len(), g.num_nodes());
        println!("  edges kept {} / {}", view.surviving_edges().len(), g.num_edges());
    }

    let tape = Tape::new();
    let opts = ViewOptions {
        overrides: DrawOverride::identity(partition.k()),
        ..ViewOptions::default()
    };
    let view = generate_view(&tape, &store, &gen, g, &partition, &opts, &mut rng)?;
    let same = view.surviving_edges() == g.edges() && *view.x.value() == *g.features();
    println!("identity draw reproduces the input: {same}");
    Ok(())
}
