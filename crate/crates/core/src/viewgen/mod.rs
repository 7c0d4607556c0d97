//! Learnable subgraph view generator.
//!
//! A generator embeds the input graph with its own GIN, samples one strategy
//! per subgraph, runs the matching operator and assembles a weighted view.
//! Every discrete decision is a straight-through Gumbel-Softmax draw, and all
//! edge and node weights are products of those draws, so any loss on the view
//! reaches the generator parameters.
//!
//! Weights are built twice: once from the straight-through draws (forward
//! values exactly 0 or 1, used by the encoder) and once from the relaxed
//! draws (used by the similarity loss).
//!
//! For a subgraph `s` whose applied strategy came from state entry `f`:
//!
//! - an existing item (node, edge) with keep draw `k` gets `1 − f·(1 − k)`;
//! - a sampled new edge gets `f·k`;
//! - a swapped edge keeps `1 − F` on its old endpoints and `F` on the new
//!   ones, where `F` is the product of the swap entries of the moved ends.
//!
//! Edge weights are further multiplied by the node keeps of both endpoints.

mod importance;
mod ops;

pub use importance::{subgraph_importance, GraphImportance, SubgraphImportance};
pub use ops::{
    feature_mask, inter_edge_perturb, inter_partner, intra_edge_perturb, node_drop, select_strategies,
    subgraph_swap, swap_correspondence, BinaryDraw, EdgeDraw, Selection, SwapPlan, MASKED_LOGIT,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, ParamId, ParamStore, Tape, Tensor, Var};
use crate::encoder::{GinConfig, GinEncoder, GraphInput};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::partition::Partition;

pub const NUM_STRATEGIES: usize = 5;

/// Augmentation strategies, in state-matrix column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NodeDrop,
    FeatureMask,
    IntraEdge,
    InterEdge,
    SubgraphSwap,
}

impl Strategy {
    pub const ALL: [Strategy; NUM_STRATEGIES] = [
        Strategy::NodeDrop,
        Strategy::FeatureMask,
        Strategy::IntraEdge,
        Strategy::InterEdge,
        Strategy::SubgraphSwap,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NodeDrop => "node_drop",
            Strategy::FeatureMask => "feature_mask",
            Strategy::IntraEdge => "intra_edge",
            Strategy::InterEdge => "inter_edge",
            Strategy::SubgraphSwap => "subgraph_swap",
        }
    }

    /// Whether the strategy needs a partner subgraph.
    pub fn is_inter(self) -> bool {
        matches!(self, Strategy::InterEdge | Strategy::SubgraphSwap)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown strategy `{s}`")))
    }
}

/// Learnable heads of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Selector,
    NodeDrop,
    FeatureMask,
    IntraEdge,
    InterEdge,
}

impl Head {
    pub const ALL: [Head; 5] = [Head::Selector, Head::NodeDrop, Head::FeatureMask, Head::IntraEdge, Head::InterEdge];

    pub fn name(self) -> &'static str {
        match self {
            Head::Selector => "selector",
            Head::NodeDrop => "node_drop",
            Head::FeatureMask => "feature_mask",
            Head::IntraEdge => "intra_edge",
            Head::InterEdge => "inter_edge",
        }
    }
}

/// Parameter handles of one view generator.
#[derive(Debug, Clone)]
pub struct ViewGenerator {
    pub encoder: GinEncoder,
    prefix: String,
    select: (ParamId, ParamId),
    drop: (ParamId, ParamId),
    mask: (ParamId, ParamId),
    intra: (ParamId, ParamId),
    inter: (ParamId, ParamId),
}

fn head_shapes(h: usize) -> [(&'static str, usize, usize); 5] {
    [
        ("select", h, NUM_STRATEGIES),
        ("drop", h, 2),
        ("mask", h, 2),
        ("intra", 2 * h, 2),
        ("inter", 4 * h, 2),
    ]
}

impl ViewGenerator {
    /// Registers a generator with its own encoder, named `<prefix>.*`.
    pub fn new(store: &mut ParamStore, prefix: &str, gin: GinConfig, rng: &mut impl Rng) -> Result<Self> {
        let encoder = GinEncoder::new(store, &format!("{prefix}.enc"), gin, rng)?;
        Self::with_encoder(store, prefix, encoder, rng)
    }

    /// Registers heads on top of an existing encoder (shared weights).
    pub fn with_encoder(store: &mut ParamStore, prefix: &str, encoder: GinEncoder, rng: &mut impl Rng) -> Result<Self> {
        let h = encoder.config().hidden_dim;
        let mut heads = Vec::with_capacity(5);
        for (name, rows, cols) in head_shapes(h) {
            let w = store.add_glorot(format!("{prefix}.{name}.w"), rows, cols, rng)?;
            let b = store.add_zeros(format!("{prefix}.{name}.b"), &[cols])?;
            heads.push((w, b));
        }
        Ok(Self {
            encoder,
            prefix: prefix.to_string(),
            select: heads[0],
            drop: heads[1],
            mask: heads[2],
            intra: heads[3],
            inter: heads[4],
        })
    }

    /// Looks up an existing generator's parameters.
    pub fn attach(store: &ParamStore, prefix: &str, encoder: GinEncoder) -> Result<Self> {
        let h = encoder.config().hidden_dim;
        let mut heads = Vec::with_capacity(5);
        for (name, rows, cols) in head_shapes(h) {
            let find = |n: String, shape: &[usize]| -> Result<ParamId> {
                let id = store
                    .id(&n)
                    .ok_or_else(|| Error::Compatibility(format!("missing parameter `{n}`")))?;
                if store.value(id).shape() != shape {
                    return Err(Error::Compatibility(format!("parameter `{n}` has the wrong shape")));
                }
                Ok(id)
            };
            heads.push((
                find(format!("{prefix}.{name}.w"), &[rows, cols])?,
                find(format!("{prefix}.{name}.b"), &[cols])?,
            ));
        }
        Ok(Self {
            encoder,
            prefix: prefix.to_string(),
            select: heads[0],
            drop: heads[1],
            mask: heads[2],
            intra: heads[3],
            inter: heads[4],
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn head_params(&self, head: Head) -> [ParamId; 2] {
        let (w, b) = match head {
            Head::Selector => self.select,
            Head::NodeDrop => self.drop,
            Head::FeatureMask => self.mask,
            Head::IntraEdge => self.intra,
            Head::InterEdge => self.inter,
        };
        [w, b]
    }
}

/// Forces parts of the sampling, for tests and diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrawOverride {
    /// Strategy per subgraph instead of the sampled one.
    pub strategies: Option<Vec<Strategy>>,
    /// Every binary decision resolves to "keep".
    pub keep_all: bool,
}

impl DrawOverride {
    /// All subgraphs mask features and every draw keeps: the view equals the input.
    pub fn identity(k: usize) -> Self {
        Self {
            strategies: Some(vec![Strategy::FeatureMask; k]),
            keep_all: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewOptions {
    pub temperature: f64,
    /// Sampled non-edges per existing candidate edge.
    pub neg_ratio: f64,
    pub overrides: DrawOverride,
}

impl Default for ViewOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            neg_ratio: 1.0,
            overrides: DrawOverride::default(),
        }
    }
}

/// One augmented graph, still attached to the tape it was built on.
pub struct AugmentedView<'t> {
    pub num_nodes: usize,
    /// `N×d`; dropped or masked rows are zero.
    pub x: Var<'t>,
    /// Canonical `(u < v)` pairs, including candidates whose weight is 0.
    pub edges: Vec<(usize, usize)>,
    /// One weight per entry of `edges`; `None` when there are no edges.
    pub edge_weight: Option<Var<'t>>,
    pub edge_weight_soft: Option<Var<'t>>,
    /// Length `N`, forward values 0 or 1.
    pub node_keep: Var<'t>,
    /// `k×5` state matrix, one-hot forward.
    pub state: Var<'t>,
    pub state_soft: Var<'t>,
    /// `N×N` weighted adjacency.
    pub adjacency: Var<'t>,
    pub adjacency_soft: Var<'t>,
    /// Sampled strategy per subgraph.
    pub choices: Vec<Strategy>,
    /// Strategy actually applied (unpaired swaps fall back to intra-edge).
    pub applied: Vec<Strategy>,
    pub swap_pairs: Vec<(usize, usize)>,
    /// Heads that were evaluated while building this view.
    pub heads_used: BTreeSet<Head>,
}

impl AugmentedView<'_> {
    /// Edges whose forward weight is positive.
    pub fn surviving_edges(&self) -> Vec<(usize, usize)> {
        match self.edge_weight {
            None => Vec::new(),
            Some(w) => {
                let w = w.value();
                self.edges
                    .iter()
                    .zip(w.data())
                    .filter(|(_, &x)| x > 0.0)
                    .map(|(&e, _)| e)
                    .collect()
            }
        }
    }

    pub fn surviving_nodes(&self) -> Vec<usize> {
        let keep = self.node_keep.value();
        (0..self.num_nodes).filter(|&v| keep.data()[v] > 0.0).collect()
    }
}

/// Disjoint union of views as encoder input.
pub fn views_to_input<'t>(views: &[&AugmentedView<'t>]) -> Result<GraphInput<'t>> {
    if views.is_empty() {
        return Err(Error::Contract("no views to encode".into()));
    }
    let x = concat(&views.iter().map(|v| v.x).collect::<Vec<_>>(), 0)?;
    let keep = concat(&views.iter().map(|v| v.node_keep).collect::<Vec<_>>(), 0)?;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    let mut graph_of = Vec::new();
    let mut offset = 0;
    for (i, v) in views.iter().enumerate() {
        edges.extend(v.edges.iter().map(|&(a, b)| (a + offset, b + offset)));
        weights.extend(v.edge_weight);
        graph_of.extend(std::iter::repeat_n(i, v.num_nodes));
        offset += v.num_nodes;
    }
    Ok(GraphInput {
        x,
        edges,
        edge_weight: if weights.is_empty() { None } else { Some(concat(&weights, 0)?) },
        node_keep: Some(keep),
        graph_of,
        num_graphs: views.len(),
    })
}

/// Per-subgraph operator outputs, shared by both weight builds.
struct Draws<'t> {
    drop: Vec<(usize, BinaryDraw<'t>)>,
    mask: Vec<(usize, BinaryDraw<'t>)>,
    /// `(subgraph whose gate applies, draw)`
    edges: Vec<(usize, EdgeDraw<'t>)>,
    swap: SwapPlan,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Hard,
    Soft,
}

/// Samples one augmented view of `g`.
pub fn generate_view<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    gen: &ViewGenerator,
    g: &Graph,
    partition: &Partition,
    opts: &ViewOptions,
    rng: &mut impl Rng,
) -> Result<AugmentedView<'t>> {
    let n = g.num_nodes();
    let k = partition.k();
    if partition.num_nodes() != n {
        return Err(Error::dim("generate_view", &[partition.num_nodes()], &[n]));
    }
    let tau = opts.temperature;
    let keep_all = opts.overrides.keep_all;
    let mut heads_used = BTreeSet::from([Head::Selector]);

    let input = GraphInput::from_graph(tape, g);
    let node = gen.encoder.node_embeddings(tape, store, &input)?;
    let sub = gen.encoder.subgraph_embeddings(tape, node, partition.all_members())?;
    let mut selection = select_strategies(tape, store, gen, sub, tau, rng)?;
    if let Some(forced) = &opts.overrides.strategies {
        if forced.len() != k || (k == 1 && forced.iter().any(|s| s.is_inter())) {
            return Err(Error::Contract("forced strategies do not fit the partition".into()));
        }
        let mut hard = Tensor::zeros(&[k, NUM_STRATEGIES]);
        for (s, st) in forced.iter().enumerate() {
            hard.data_mut()[s * NUM_STRATEGIES + st.index()] = 1.0;
        }
        selection.hard = selection.soft.straight_through(hard)?;
        selection.choices = forced.clone();
    }
    let choices = selection.choices.clone();

    // Swap pairs: consecutive swap-selecting subgraphs by id.
    let swappers: Vec<usize> = (0..k).filter(|&s| choices[s] == Strategy::SubgraphSwap).collect();
    let swap_pairs: Vec<(usize, usize)> = swappers.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let mut applied = choices.clone();
    if swappers.len() % 2 == 1 {
        applied[*swappers.last().expect("odd count")] = Strategy::IntraEdge;
    }
    let swap = subgraph_swap(g, partition, &swap_pairs);
    let rewired: BTreeSet<(usize, usize)> = swap.moved.iter().map(|&(_, p, _)| p).collect();

    let mut draws = Draws {
        drop: Vec::new(),
        mask: Vec::new(),
        edges: Vec::new(),
        swap,
    };
    let mut inter_done = BTreeSet::new();
    for s in 0..k {
        let members = partition.members(s);
        match applied[s] {
            Strategy::NodeDrop => {
                heads_used.insert(Head::NodeDrop);
                draws.drop.push((s, node_drop(tape, store, gen, node, members, tau, keep_all, rng)?));
            }
            Strategy::FeatureMask => {
                heads_used.insert(Head::FeatureMask);
                draws.mask.push((s, feature_mask(tape, store, gen, node, members, tau, keep_all, rng)?));
            }
            Strategy::IntraEdge => {
                let d = intra_edge_perturb(tape, store, gen, g, partition, s, node, tau, opts.neg_ratio, keep_all, rng)?;
                if let Some(d) = d {
                    heads_used.insert(Head::IntraEdge);
                    draws.edges.push((s, d));
                }
            }
            Strategy::InterEdge => {
                let partner = inter_partner(g, partition, s).expect("k >= 2 for inter strategies");
                if !inter_done.insert((s.min(partner), s.max(partner))) {
                    continue;
                }
                let d = inter_edge_perturb(
                    tape,
                    store,
                    gen,
                    g,
                    partition,
                    (s, partner),
                    node,
                    sub,
                    tau,
                    opts.neg_ratio,
                    &rewired,
                    keep_all,
                    rng,
                )?;
                if let Some(d) = d {
                    heads_used.insert(Head::InterEdge);
                    draws.edges.push((s, d));
                }
            }
            Strategy::SubgraphSwap => {}
        }
    }

    let gates = |state: Var<'t>| -> Result<Var<'t>> {
        let idx: Vec<usize> = (0..k).map(|s| s * NUM_STRATEGIES + choices[s].index()).collect();
        state.flatten()?.gather(&idx)
    };
    let gate_hard = gates(selection.hard)?;
    let gate_soft = gates(selection.soft)?;

    let built_hard = build_weights(tape, g, partition, &draws, gate_hard, Mode::Hard)?;
    let built_soft = build_weights(tape, g, partition, &draws, gate_soft, Mode::Soft)?;

    let x_const = tape.constant(g.features().clone());
    let x = match built_hard.node_weight {
        Some(w) => x_const.scale_rows(w)?,
        None => x_const,
    };
    let dense = |w: Option<Var<'t>>, edges: &[(usize, usize)]| -> Result<Var<'t>> {
        match w {
            Some(w) => w.to_dense_symmetric(edges, n),
            None => Ok(tape.constant(Tensor::zeros(&[n, n]))),
        }
    };
    let adjacency = dense(built_hard.edge_weight, &built_hard.edges)?;
    let adjacency_soft = dense(built_soft.edge_weight, &built_soft.edges)?;
    debug_assert_eq!(built_hard.edges, built_soft.edges);
    Ok(AugmentedView {
        num_nodes: n,
        x,
        edges: built_hard.edges,
        edge_weight: built_hard.edge_weight,
        edge_weight_soft: built_soft.edge_weight,
        node_keep: built_hard.node_keep.unwrap_or_else(|| tape.constant(Tensor::full(&[n], 1.0))),
        state: selection.hard,
        state_soft: selection.soft,
        adjacency,
        adjacency_soft,
        choices,
        applied,
        swap_pairs,
        heads_used,
    })
}

struct Built<'t> {
    node_keep: Option<Var<'t>>,
    node_weight: Option<Var<'t>>,
    edges: Vec<(usize, usize)>,
    edge_weight: Option<Var<'t>>,
}

/// Places `pieces` (positions, values) into a length-`len` vector whose other
/// entries are `fill`. `None` when there are no pieces.
fn scatter<'t>(tape: &'t Tape, len: usize, pieces: &[(Vec<usize>, Var<'t>)], fill: f64) -> Result<Option<Var<'t>>> {
    if pieces.is_empty() {
        return Ok(None);
    }
    let mut parts: Vec<Var<'t>> = pieces.iter().map(|(_, v)| *v).collect();
    parts.push(tape.constant(Tensor::vector(vec![fill])));
    let all = concat(&parts, 0)?;
    let fill_at: usize = pieces.iter().map(|(p, _)| p.len()).sum();
    let mut idx = vec![fill_at; len];
    let mut offset = 0;
    for (positions, _) in pieces {
        for (i, &p) in positions.iter().enumerate() {
            idx[p] = offset + i;
        }
        offset += positions.len();
    }
    Ok(Some(all.gather(&idx)?))
}

fn mul_opt<'t>(a: Option<Var<'t>>, b: Option<Var<'t>>) -> Result<Option<Var<'t>>> {
    Ok(match (a, b) {
        (Some(a), Some(b)) => Some(a.mul(b)?),
        (a, None) => a,
        (None, b) => b,
    })
}

/// `1 − f·(1 − k)`.
fn gated_keep<'t>(k: Var<'t>, f: Var<'t>) -> Result<Var<'t>> {
    Ok(k.one_minus().mul(f)?.one_minus())
}

fn build_weights<'t>(
    tape: &'t Tape,
    g: &Graph,
    partition: &Partition,
    draws: &Draws<'t>,
    gate: Var<'t>,
    mode: Mode,
) -> Result<Built<'t>> {
    let n = g.num_nodes();
    let m = g.num_edges();
    let f = |s: usize| gate.gather(&[s]);
    let pick = |d: &BinaryDraw<'t>| if mode == Mode::Hard { d.keep_hard } else { d.keep_soft };

    let node_pieces = |list: &[(usize, BinaryDraw<'t>)]| -> Result<Vec<(Vec<usize>, Var<'t>)>> {
        list.iter()
            .map(|(s, d)| Ok((partition.members(*s).to_vec(), gated_keep(pick(d), f(*s)?)?)))
            .collect()
    };
    let drop_pieces = node_pieces(&draws.drop)?;
    let mask_pieces = node_pieces(&draws.mask)?;
    let node_keep = scatter(tape, n, &drop_pieces, 1.0)?;
    let mask = scatter(tape, n, &mask_pieces, 1.0)?;
    let node_weight = mul_opt(node_keep, mask)?;

    if m == 0 && draws.edges.iter().all(|(_, d)| d.candidates.is_empty()) {
        return Ok(Built {
            node_keep,
            node_weight,
            edges: Vec::new(),
            edge_weight: None,
        });
    }

    // Factors on existing edges from edge operators.
    let mut op_pieces = Vec::new();
    // New candidate edges: (pairs, weights before node keeps).
    let mut new_pairs: Vec<(usize, usize)> = Vec::new();
    let mut new_parts: Vec<Var<'t>> = Vec::new();
    for (s, d) in &draws.edges {
        let k = pick(&d.draw);
        let fs = f(*s)?;
        let ne = d.existing.len();
        if ne > 0 {
            let idx: Vec<usize> = (0..ne).collect();
            op_pieces.push((d.existing.clone(), gated_keep(k.gather(&idx)?, fs)?));
        }
        if d.num_new() > 0 {
            let idx: Vec<usize> = (ne..d.candidates.len()).collect();
            new_parts.push(k.gather(&idx)?.mul(fs)?);
            new_pairs.extend_from_slice(&d.candidates[ne..]);
        }
    }
    let op_full = scatter(tape, m, &op_pieces, 1.0)?;

    let endpoint_keep = |pairs: &[(usize, usize)]| -> Result<Option<Var<'t>>> {
        match node_keep {
            None => Ok(None),
            Some(keep) => {
                let us: Vec<usize> = pairs.iter().map(|&(u, _)| u).collect();
                let vs: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
                Ok(Some(keep.gather(&us)?.mul(keep.gather(&vs)?)?))
            }
        }
    };

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut parts: Vec<Var<'t>> = Vec::new();
    if m > 0 {
        let base = mul_opt(op_full, endpoint_keep(g.edges())?)?;
        let mut stay_pieces = Vec::new();
        let mut moved_idx = Vec::new();
        let mut moved_f = Vec::new();
        for (e, _, movers) in &draws.swap.moved {
            let mut fe = f(movers[0])?;
            for &s in &movers[1..] {
                fe = fe.mul(f(s)?)?;
            }
            stay_pieces.push((vec![*e], fe.one_minus()));
            moved_idx.push(*e);
            moved_f.push(fe);
        }
        let stay = scatter(tape, m, &stay_pieces, 1.0)?;
        let orig = mul_opt(base, stay)?.unwrap_or_else(|| tape.constant(Tensor::full(&[m], 1.0)));
        pairs.extend_from_slice(g.edges());
        parts.push(orig);
        if !moved_idx.is_empty() {
            let fvec = concat(&moved_f, 0)?;
            let w = match base {
                Some(b) => b.gather(&moved_idx)?.mul(fvec)?,
                None => fvec,
            };
            pairs.extend(draws.swap.moved.iter().map(|&(_, p, _)| p));
            parts.push(w);
        }
    }
    if !new_parts.is_empty() {
        let w = concat(&new_parts, 0)?;
        let w = mul_opt(Some(w), endpoint_keep(&new_pairs)?)?.expect("present");
        pairs.extend_from_slice(&new_pairs);
        parts.push(w);
    }

    // Merge duplicate pairs by summing their weights.
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for p in &pairs {
        ids.insert(*p, 0);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let seg: Vec<usize> = pairs.iter().map(|p| ids[p]).collect();
    let all = concat(&parts, 0)?;
    let edge_weight = if ids.len() == pairs.len() && seg.iter().enumerate().all(|(i, &s)| i == s) {
        all
    } else {
        all.segment_sum(&seg, ids.len())?
    };
    Ok(Built {
        node_keep,
        node_weight,
        edges: ids.into_keys().collect(),
        edge_weight: Some(edge_weight),
    })
}
