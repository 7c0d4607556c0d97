//! The selector and the five augmentation operators.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Strategy, ViewGenerator, NUM_STRATEGIES};
use crate::autodiff::{concat, gumbel_sample, linear, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::partition::Partition;

/// Logit added to strategies that need a partner subgraph when there is none.
pub const MASKED_LOGIT: f64 = -1e30;

/// Sampled state matrix.
pub struct Selection<'t> {
    /// `k×5`, one-hot forward value, soft gradient.
    pub hard: Var<'t>,
    /// `k×5` relaxed sample.
    pub soft: Var<'t>,
    pub choices: Vec<Strategy>,
}

/// Samples one strategy per subgraph from its embedding.
pub fn select_strategies<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    gen: &ViewGenerator,
    sub_embs: Var<'t>,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<Selection<'t>> {
    let k = sub_embs.shape()[0];
    if k == 0 {
        return Err(Error::Contract("selector needs at least one subgraph".into()));
    }
    let mut logits = linear(tape, store, sub_embs, gen.select.0, gen.select.1)?;
    if k == 1 {
        let mut mask = Tensor::zeros(&[1, NUM_STRATEGIES]);
        mask.data_mut()[Strategy::InterEdge.index()] = MASKED_LOGIT;
        mask.data_mut()[Strategy::SubgraphSwap.index()] = MASKED_LOGIT;
        logits = logits.add_const(&mask)?;
    }
    let sample = gumbel_sample(logits, temperature, rng)?;
    Ok(Selection {
        hard: sample.hard()?,
        soft: sample.soft,
        choices: sample.argmax.iter().map(|&c| Strategy::ALL[c]).collect(),
    })
}

/// Keep/drop decisions for a set of items. Column 0 of each head is "keep".
pub struct BinaryDraw<'t> {
    /// Forward 0/1 keep values with soft gradient.
    pub keep_hard: Var<'t>,
    /// Relaxed keep probabilities.
    pub keep_soft: Var<'t>,
    pub keep: Vec<bool>,
}

fn binary_draw<'t>(logits: Var<'t>, temperature: f64, keep_all: bool, rng: &mut impl Rng) -> Result<(BinaryDraw<'t>, Vec<usize>)> {
    let sample = gumbel_sample(logits, temperature, rng)?;
    let choices = if keep_all {
        vec![0; sample.argmax.len()]
    } else {
        sample.argmax.clone()
    };
    let draw = BinaryDraw {
        keep_hard: sample.hard_from(&choices)?.column(0)?,
        keep_soft: sample.soft.column(0)?,
        keep: choices.iter().map(|&c| c == 0).collect(),
    };
    Ok((draw, choices))
}

/// Per-node keep/drop for one subgraph. If every node draws "drop", the node
/// with the highest relaxed keep value is kept.
#[allow(clippy::too_many_arguments)]
pub fn node_drop<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    gen: &ViewGenerator,
    node_embs: Var<'t>,
    members: &[usize],
    temperature: f64,
    keep_all: bool,
    rng: &mut impl Rng,
) -> Result<BinaryDraw<'t>> {
    if members.is_empty() {
        return Err(Error::Contract("node_drop on an empty subgraph".into()));
    }
    let logits = linear(tape, store, node_embs.gather(members)?, gen.drop.0, gen.drop.1)?;
    let sample = gumbel_sample(logits, temperature, rng)?;
    let mut choices = if keep_all {
        vec![0; members.len()]
    } else {
        sample.argmax.clone()
    };
    if choices.iter().all(|&c| c == 1) {
        let soft = sample.soft.value();
        let mut best = 0;
        for i in 1..members.len() {
            if soft.get(i, 0) > soft.get(best, 0) {
                best = i;
            }
        }
        choices[best] = 0;
    }
    Ok(BinaryDraw {
        keep_hard: sample.hard_from(&choices)?.column(0)?,
        keep_soft: sample.soft.column(0)?,
        keep: choices.iter().map(|&c| c == 0).collect(),
    })
}

/// Per-node keep/mask of whole feature rows for one subgraph.
#[allow(clippy::too_many_arguments)]
pub fn feature_mask<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    gen: &ViewGenerator,
    node_embs: Var<'t>,
    members: &[usize],
    temperature: f64,
    keep_all: bool,
    rng: &mut impl Rng,
) -> Result<BinaryDraw<'t>> {
    if members.is_empty() {
        return Err(Error::Contract("feature_mask on an empty subgraph".into()));
    }
    let logits = linear(tape, store, node_embs.gather(members)?, gen.mask.0, gen.mask.1)?;
    Ok(binary_draw(logits, temperature, keep_all, rng)?.0)
}

/// Candidate edges with keep decisions. The first `existing.len()`
/// candidates are edges of the input graph (`existing` holds their indices);
/// the rest are sampled non-edges.
pub struct EdgeDraw<'t> {
    pub candidates: Vec<(usize, usize)>,
    pub existing: Vec<usize>,
    pub draw: BinaryDraw<'t>,
}

impl EdgeDraw<'_> {
    pub fn num_new(&self) -> usize {
        self.candidates.len() - self.existing.len()
    }
}

fn neg_count(existing: usize, ratio: f64, floor: usize) -> usize {
    ((existing as f64 * ratio).round() as usize).max(floor)
}

/// Keep/drop over the intra edges of subgraph `s` plus as many sampled
/// non-edges inside it. `None` for subgraphs with fewer than two nodes or no
/// candidates at all.
#[allow(clippy::too_many_arguments)]
pub fn intra_edge_perturb<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    gen: &ViewGenerator,
    g: &Graph,
    partition: &Partition,
    s: usize,
    node_embs: Var<'t>,
    temperature: f64,
    neg_ratio: f64,
    keep_all: bool,
    rng: &mut impl Rng,
) -> Result<Option<EdgeDraw<'t>>> {
    let members = partition.members(s);
    if members.len() < 2 {
        return Ok(None);
    }
    let existing = partition.intra_edges(s).to_vec();
    let mut candidates: Vec<(usize, usize)> = existing.iter().map(|&e| g.edges()[e]).collect();
    let mut pool = Vec::new();
    for (i, &u) in members.iter().enumerate() {
        for &v in &members[i + 1..] {
            let (a, b) = (u.min(v), u.max(v));
            if !g.has_edge(a, b) {
                pool.push((a, b));
            }
        }
    }
    let n_neg = neg_count(existing.len(), neg_ratio, 0).min(pool.len());
    let mut negs: Vec<(usize, usize)> = pool.choose_multiple(rng, n_neg).copied().collect();
    negs.sort_unstable();
    candidates.extend(negs);
    if candidates.is_empty() {
        return Ok(None);
    }
    let us: Vec<usize> = candidates.iter().map(|&(u, _)| u).collect();
    let vs: Vec<usize> = candidates.iter().map(|&(_, v)| v).collect();
    let feats = concat(&[node_embs.gather(&us)?, node_embs.gather(&vs)?], 1)?;
    let logits = linear(tape, store, feats, gen.intra.0, gen.intra.1)?;
    let (draw, _) = binary_draw(logits, temperature, keep_all, rng)?;
    Ok(Some(EdgeDraw {
        candidates,
        existing,
        draw,
    }))
}

/// Partner of `s` for inter-edge perturbation: the subgraph sharing the most
/// cross edges with it (lowest id on ties), else the lowest other id.
pub fn inter_partner(g: &Graph, partition: &Partition, s: usize) -> Option<usize> {
    let a = partition.assignment();
    let mut counts = vec![0usize; partition.k()];
    for &e in partition.inter_edges() {
        let (u, v) = g.edges()[e];
        if a[u] == s {
            counts[a[v]] += 1;
        } else if a[v] == s {
            counts[a[u]] += 1;
        }
    }
    let mut best: Option<usize> = None;
    for (t, &c) in counts.iter().enumerate() {
        if t != s && c > 0 && best.is_none_or(|b| c > counts[b]) {
            best = Some(t);
        }
    }
    best.or_else(|| (0..partition.k()).find(|&t| t != s))
}

/// Keep/drop over the edges between subgraphs `si` and `sj` plus sampled
/// cross non-edges (at least one). Candidate features are
/// `h_v ∥ h_u ∥ h_{S_i} ∥ h_{S_j}` with `v ∈ S_i`, `u ∈ S_j`. Pairs in
/// `exclude` are never sampled.
#[allow(clippy::too_many_arguments)]
pub fn inter_edge_perturb<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    gen: &ViewGenerator,
    g: &Graph,
    partition: &Partition,
    (si, sj): (usize, usize),
    node_embs: Var<'t>,
    sub_embs: Var<'t>,
    temperature: f64,
    neg_ratio: f64,
    exclude: &BTreeSet<(usize, usize)>,
    keep_all: bool,
    rng: &mut impl Rng,
) -> Result<Option<EdgeDraw<'t>>> {
    let a = partition.assignment();
    let mut existing = Vec::new();
    // (node in S_i, node in S_j)
    let mut oriented = Vec::new();
    for &e in partition.inter_edges() {
        let (u, v) = g.edges()[e];
        if a[u] == si && a[v] == sj {
            existing.push(e);
            oriented.push((u, v));
        } else if a[v] == si && a[u] == sj {
            existing.push(e);
            oriented.push((v, u));
        }
    }
    let mut pool = Vec::new();
    for &v in partition.members(si) {
        for &u in partition.members(sj) {
            let pair = (u.min(v), u.max(v));
            if !g.has_edge(pair.0, pair.1) && !exclude.contains(&pair) {
                pool.push((v, u));
            }
        }
    }
    let n_neg = neg_count(existing.len(), neg_ratio, 1).min(pool.len());
    let mut negs: Vec<(usize, usize)> = pool.choose_multiple(rng, n_neg).copied().collect();
    negs.sort_unstable();
    oriented.extend(negs);
    if oriented.is_empty() {
        return Ok(None);
    }
    let vi: Vec<usize> = oriented.iter().map(|&(v, _)| v).collect();
    let uj: Vec<usize> = oriented.iter().map(|&(_, u)| u).collect();
    let n = oriented.len();
    let feats = concat(
        &[
            node_embs.gather(&vi)?,
            node_embs.gather(&uj)?,
            sub_embs.gather(&vec![si; n])?,
            sub_embs.gather(&vec![sj; n])?,
        ],
        1,
    )?;
    let logits = linear(tape, store, feats, gen.inter.0, gen.inter.1)?;
    let (draw, _) = binary_draw(logits, temperature, keep_all, rng)?;
    Ok(Some(EdgeDraw {
        candidates: oriented.iter().map(|&(v, u)| (v.min(u), v.max(u))).collect(),
        existing,
        draw,
    }))
}

/// Node correspondence between two subgraphs: members of each are ranked by
/// descending degree (lowest id first on ties) and paired rank by rank, up to
/// the smaller size.
pub fn swap_correspondence(g: &Graph, partition: &Partition, sa: usize, sb: usize) -> Vec<(usize, usize)> {
    let deg = g.degrees();
    let ranked = |s: usize| {
        let mut m = partition.members(s).to_vec();
        m.sort_by(|&x, &y| deg[y].cmp(&deg[x]).then(x.cmp(&y)));
        m
    };
    ranked(sa).into_iter().zip(ranked(sb)).collect()
}

/// Rewiring produced by a set of swap pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapPlan {
    /// Node permutation: `perm[v]` is where `v`'s external attachments go.
    pub perm: Vec<usize>,
    /// `(edge index, rewired pair, subgraphs whose swap moved an endpoint)`.
    pub moved: Vec<(usize, (usize, usize), Vec<usize>)>,
}

/// Rewires every edge with an endpoint in a swapped subgraph, except edges
/// inside one swap pair. Each such endpoint `u` moves to `perm[u]`.
pub fn subgraph_swap(g: &Graph, partition: &Partition, pairs: &[(usize, usize)]) -> SwapPlan {
    let a = partition.assignment();
    let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
    // block id per subgraph: the pair it belongs to
    let mut block = vec![usize::MAX; partition.k()];
    for (b, &(sa, sb)) in pairs.iter().enumerate() {
        block[sa] = b;
        block[sb] = b;
        for (x, y) in swap_correspondence(g, partition, sa, sb) {
            perm[x] = y;
            perm[y] = x;
        }
    }
    let mut moved = Vec::new();
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        let (bu, bv) = (block[a[u]], block[a[v]]);
        if bu != usize::MAX && bu == bv {
            continue;
        }
        let (pu, pv) = (perm[u], perm[v]);
        if (pu, pv) == (u, v) {
            continue;
        }
        let mut movers = Vec::new();
        if pu != u {
            movers.push(a[u]);
        }
        if pv != v {
            movers.push(a[v]);
        }
        moved.push((e, (pu.min(pv), pu.max(pv)), movers));
    }
    SwapPlan { perm, moved }
}
