use serde::{Deserialize, Serialize};

use super::{Strategy, ViewGenerator, MASKED_LOGIT, NUM_STRATEGIES};
use crate::autodiff::{linear, ParamStore, Tape, Tensor};
use crate::encoder::GraphInput;
use crate::error::Result;
use crate::graph::Graph;
use crate::partition::Partition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphImportance {
    pub id: usize,
    pub nodes: Vec<usize>,
    /// Mean noise-free keep probability of the node-drop head over the nodes.
    pub keep_prob: f64,
    /// Noise-free strategy distribution, in state-matrix column order.
    pub strategy_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphImportance {
    pub graph: usize,
    pub label: Option<usize>,
    pub subgraphs: Vec<SubgraphImportance>,
}

/// Deterministic per-subgraph scores of one generator on one graph.
pub fn subgraph_importance(
    store: &ParamStore,
    gen: &ViewGenerator,
    g: &Graph,
    graph_index: usize,
    partition: &Partition,
) -> Result<GraphImportance> {
    let tape = Tape::new();
    let input = GraphInput::from_graph(&tape, g);
    let node = gen.encoder.node_embeddings(&tape, store, &input)?;
    let sub = gen.encoder.subgraph_embeddings(&tape, node, partition.all_members())?;
    let mut logits = linear(&tape, store, sub, gen.select.0, gen.select.1)?;
    let k = partition.k();
    if k == 1 {
        let mut mask = Tensor::zeros(&[1, NUM_STRATEGIES]);
        mask.data_mut()[Strategy::InterEdge.index()] = MASKED_LOGIT;
        mask.data_mut()[Strategy::SubgraphSwap.index()] = MASKED_LOGIT;
        logits = logits.add_const(&mask)?;
    }
    let probs = logits.softmax(1.0)?.to_tensor();
    let keep = linear(&tape, store, node, gen.drop.0, gen.drop.1)?.softmax(1.0)?.to_tensor();
    let subgraphs = (0..k)
        .map(|s| {
            let nodes = partition.members(s).to_vec();
            let keep_prob = nodes.iter().map(|&v| keep.get(v, 0)).sum::<f64>() / nodes.len() as f64;
            SubgraphImportance {
                id: s,
                nodes,
                keep_prob,
                strategy_probs: probs.row(s).to_vec(),
            }
        })
        .collect();
    Ok(GraphImportance {
        graph: graph_index,
        label: g.label(),
        subgraphs,
    })
}
