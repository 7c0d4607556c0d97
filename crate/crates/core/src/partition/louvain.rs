//! Louvain modularity optimisation.
//!
//! Alternates local node moves with community aggregation until a level
//! produces no move. Nodes are first relabelled by a seeded shuffle, and every
//! local-move pass visits them in a fresh seeded order; ties between target
//! communities go to the lowest community id in that internal labelling.
//! Each run ends with a node-level refinement on the original graph, several
//! runs are made from reshuffled orders, and the best one is kept.
//! Communities that induce several components are split afterwards.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{modularity_with_resolution, Partition};
use crate::graph::Graph;

/// Stop a level once a full pass improves modularity by less than this.
const MIN_PASS_GAIN: f64 = 1e-7;
const MAX_PASSES: usize = 1000;
/// Independent multilevel runs per graph; the best modularity wins.
const RESTARTS: usize = 8;

/// Weighted graph on one aggregation level. Self-loop weight counts each
/// internal edge once.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[i]
    }

    fn modularity(&self, comm: &[usize], m: f64, resolution: f64) -> f64 {
        let n = self.len();
        let (mut inner, mut tot) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            inner[comm[i]] += self.self_loops[i];
            tot[comm[i]] += self.strength(i);
            for &(j, w) in &self.adj[i] {
                if comm[j] == comm[i] && j > i {
                    inner[comm[i]] += w;
                }
            }
        }
        (0..n)
            .map(|c| inner[c] / m - resolution * (tot[c] / (2.0 * m)).powi(2))
            .sum()
    }
}

pub fn louvain(g: &Graph, rng: &mut impl Rng, resolution: f64) -> Partition {
    let mut order: Vec<usize> = (0..g.num_nodes()).collect();
    order.shuffle(rng);
    louvain_with_order(g, &order, rng, resolution)
}

/// Louvain with an explicit initial node order: internal node `r` is `order[r]`.
pub fn louvain_with_order(g: &Graph, order: &[usize], rng: &mut impl Rng, resolution: f64) -> Partition {
    let n = g.num_nodes();
    assert_eq!(order.len(), n, "order must be a permutation of the nodes");
    if g.num_edges() == 0 {
        return Partition::from_assignment(g, &(0..n).collect::<Vec<_>>()).expect("sizes agree");
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut run_order = order.to_vec();
    for restart in 0..RESTARTS {
        if restart > 0 {
            let mut shuffle: Vec<usize> = (0..n).collect();
            shuffle.shuffle(rng);
            run_order = shuffle.iter().map(|&r| order[r]).collect();
        }
        let labels = run(g, &run_order, rng, resolution);
        let q = modularity_with_resolution(g, &labels, resolution);
        if best.as_ref().is_none_or(|(bq, _)| q > bq + 1e-12) {
            best = Some((q, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Partition::from_assignment(g, &labels).expect("sizes agree").split_disconnected(g)
}

/// One multilevel run followed by a node-level refinement pass. Returns
/// community labels indexed by original node id.
fn run(g: &Graph, order: &[usize], rng: &mut impl Rng, resolution: f64) -> Vec<usize> {
    let n = g.num_nodes();
    let mut rank = vec![0; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in g.edges() {
        adj[rank[u]].push((rank[v], 1.0));
        adj[rank[v]].push((rank[u], 1.0));
    }
    for a in &mut adj {
        a.sort_by_key(|&(j, _)| j);
    }
    let base = Level {
        adj,
        self_loops: vec![0.0; n],
    };
    let m = g.num_edges() as f64;

    let mut membership = optimise(&base, (0..n).collect(), m, resolution, rng);
    let mut q = base.modularity(&membership, m, resolution);
    // Perturbation: dissolve one community into singletons and re-optimise.
    'search: loop {
        let k = compact_labels(&membership).1;
        for c in 0..k {
            let mut next = n;
            let start: Vec<usize> = membership
                .iter()
                .map(|&l| {
                    if l == c {
                        next += 1;
                        next
                    } else {
                        l
                    }
                })
                .collect();
            let candidate = optimise(&base, start, m, resolution, rng);
            let q_cand = base.modularity(&candidate, m, resolution);
            if q_cand - q >= MIN_PASS_GAIN {
                membership = candidate;
                q = q_cand;
                continue 'search;
            }
        }
        break;
    }
    (0..n).map(|v| membership[rank[v]]).collect()
}

/// Multilevel moves and aggregation from `membership`, then node-level
/// refinement, repeated until modularity stalls. Labels come back compacted.
fn optimise(base: &Level, mut membership: Vec<usize>, m: f64, resolution: f64, rng: &mut impl Rng) -> Vec<usize> {
    membership = compact_labels(&membership).0;
    let mut q = base.modularity(&membership, m, resolution);
    loop {
        let k = compact_labels(&membership).1;
        let mut level = aggregate(base, &membership, k);
        loop {
            let comm = local_moves(&level, (0..level.len()).collect(), m, resolution, rng);
            let (compact, k) = compact_labels(&comm);
            if k == level.len() {
                break;
            }
            for c in membership.iter_mut() {
                *c = compact[*c];
            }
            level = aggregate(&level, &compact, k);
        }
        membership = compact_labels(&local_moves(base, membership, m, resolution, rng)).0;
        let q_next = base.modularity(&membership, m, resolution);
        if q_next - q < MIN_PASS_GAIN {
            return membership;
        }
        q = q_next;
    }
}

fn local_moves(level: &Level, mut comm: Vec<usize>, m: f64, resolution: f64, rng: &mut impl Rng) -> Vec<usize> {
    let n = level.len();
    let strength: Vec<f64> = (0..n).map(|i| level.strength(i)).collect();
    let mut tot = vec![0.0; n];
    for i in 0..n {
        tot[comm[i]] += strength[i];
    }
    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut q = level.modularity(&comm, m, resolution);
    let mut visit: Vec<usize> = (0..n).collect();

    for _ in 0..MAX_PASSES {
        visit.shuffle(rng);
        for &i in &visit {
            let own = comm[i];
            for &(j, w) in &level.adj[i] {
                let c = comm[j];
                if links[c] == 0.0 && !touched.contains(&c) {
                    touched.push(c);
                }
                links[c] += w;
            }
            tot[own] -= strength[i];
            let ki = strength[i];
            let gain = |c: usize, links: &[f64], tot: &[f64]| links[c] - resolution * tot[c] * ki / (2.0 * m);
            let mut best = own;
            let mut best_gain = gain(own, &links, &tot);
            touched.sort_unstable();
            for &c in &touched {
                let gc = gain(c, &links, &tot);
                if gc > best_gain + 1e-12 {
                    best = c;
                    best_gain = gc;
                }
            }
            tot[best] += strength[i];
            comm[i] = best;
            for &c in &touched {
                links[c] = 0.0;
            }
            links[own] = 0.0;
            touched.clear();
        }
        let q_next = level.modularity(&comm, m, resolution);
        let gained = q_next - q;
        q = q_next;
        if gained < MIN_PASS_GAIN {
            break;
        }
    }
    comm
}

/// Renumbers labels in order of first appearance by node index.
fn compact_labels(comm: &[usize]) -> (Vec<usize>, usize) {
    let mut map = vec![usize::MAX; comm.iter().max().map_or(0, |&c| c + 1)];
    let mut k = 0;
    for &c in comm {
        if map[c] == usize::MAX {
            map[c] = k;
            k += 1;
        }
    }
    let compact: Vec<usize> = comm.iter().map(|&c| map[c]).collect();
    (compact, k)
}

fn aggregate(level: &Level, compact: &[usize], k: usize) -> Level {
    let mut self_loops = vec![0.0; k];
    let mut weights: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
    for i in 0..level.len() {
        let ci = compact[i];
        self_loops[ci] += level.self_loops[i];
        for &(j, w) in &level.adj[i] {
            let cj = compact[j];
            if ci == cj {
                if j > i {
                    self_loops[ci] += w;
                }
            } else {
                *weights[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    Level {
        adj: weights.into_iter().map(|m| m.into_iter().collect()).collect(),
        self_loops,
    }
}
