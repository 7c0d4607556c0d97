//! GIN encoder with sum/mean readouts and a projection head.
//!
//! Layer `l` computes `MLP_l((1 + ε_l)·h_v + Σ_u w_uv·keep_u·h_u)` and then
//! scales row `v` by `keep_v`. Plain graphs use unit weights and keeps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{linear, ParamId, ParamStore, Reduce, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GinConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub projection_dim: usize,
    pub graph_readout: Readout,
    pub subgraph_readout: Readout,
    /// Standardise every layer's output column-wise over the batch nodes.
    pub standardize: bool,
}

impl GinConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            layers: 3,
            hidden_dim: 32,
            input_dim,
            projection_dim: 32,
            graph_readout: Readout::Sum,
            subgraph_readout: Readout::Mean,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("hidden_dim", self.hidden_dim),
            ("input_dim", self.input_dim),
            ("projection_dim", self.projection_dim),
        ] {
            if v == 0 {
                return Err(Error::Parameter(format!("encoder {name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Batched encoder input: node features plus an undirected weighted edge list,
/// with node indices global to the batch.
pub struct GraphInput<'t> {
    pub x: Var<'t>,
    pub edges: Vec<(usize, usize)>,
    pub edge_weight: Option<Var<'t>>,
    pub node_keep: Option<Var<'t>>,
    pub graph_of: Vec<usize>,
    pub num_graphs: usize,
}

impl<'t> GraphInput<'t> {
    pub fn from_graph(tape: &'t Tape, g: &Graph) -> Self {
        Self::from_graphs(tape, &[g])
    }

    /// Disjoint union of `graphs`, as constants.
    pub fn from_graphs(tape: &'t Tape, graphs: &[&Graph]) -> Self {
        let d = graphs.first().map_or(0, |g| g.feature_dim());
        let mut feats = Vec::new();
        let mut edges = Vec::new();
        let mut graph_of = Vec::new();
        let mut offset = 0;
        for (i, g) in graphs.iter().enumerate() {
            feats.extend_from_slice(g.features().data());
            edges.extend(g.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
            graph_of.extend(std::iter::repeat_n(i, g.num_nodes()));
            offset += g.num_nodes();
        }
        let x = Tensor::matrix(offset, d, feats).expect("feature rows agree");
        Self {
            x: tape.constant(x),
            edges,
            edge_weight: None,
            node_keep: None,
            graph_of,
            num_graphs: graphs.len(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.graph_of.len()
    }
}

pub struct Embeddings<'t> {
    /// `ΣN × H`, last layer.
    pub node: Var<'t>,
    /// `M × H`, pre-projection.
    pub graph: Var<'t>,
    /// `M × P`.
    pub projected: Var<'t>,
}

#[derive(Debug, Clone)]
struct Layer {
    eps: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Parameter handles of one GIN encoder inside a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GinEncoder {
    config: GinConfig,
    prefix: String,
    layers: Vec<Layer>,
    proj: [ParamId; 4],
}

impl GinEncoder {
    /// Registers freshly initialised parameters named `<prefix>.*`.
    pub fn new(store: &mut ParamStore, prefix: &str, config: GinConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let din = if l == 0 { config.input_dim } else { h };
            let p = format!("{prefix}.gin{l}");
            layers.push(Layer {
                eps: store.add_zeros(format!("{p}.eps"), &[1])?,
                w1: store.add_glorot(format!("{p}.w1"), din, h, rng)?,
                b1: store.add_zeros(format!("{p}.b1"), &[h])?,
                w2: store.add_glorot(format!("{p}.w2"), h, h, rng)?,
                b2: store.add_zeros(format!("{p}.b2"), &[h])?,
            });
        }
        let pd = config.projection_dim;
        let proj = [
            store.add_glorot(format!("{prefix}.proj.w1"), h, h, rng)?,
            store.add_zeros(format!("{prefix}.proj.b1"), &[h])?,
            store.add_glorot(format!("{prefix}.proj.w2"), h, pd, rng)?,
            store.add_zeros(format!("{prefix}.proj.b2"), &[pd])?,
        ];
        Ok(Self {
            config,
            prefix: prefix.to_string(),
            layers,
            proj,
        })
    }

    /// Looks up existing parameters by name, checking their shapes.
    pub fn attach(store: &ParamStore, prefix: &str, config: GinConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let find = |name: String, shape: &[usize]| -> Result<ParamId> {
            let id = store
                .id(&name)
                .ok_or_else(|| Error::Compatibility(format!("missing parameter `{name}`")))?;
            if store.value(id).shape() != shape {
                return Err(Error::Compatibility(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    store.value(id).shape()
                )));
            }
            Ok(id)
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let din = if l == 0 { config.input_dim } else { h };
            let p = format!("{prefix}.gin{l}");
            layers.push(Layer {
                eps: find(format!("{p}.eps"), &[1])?,
                w1: find(format!("{p}.w1"), &[din, h])?,
                b1: find(format!("{p}.b1"), &[h])?,
                w2: find(format!("{p}.w2"), &[h, h])?,
                b2: find(format!("{p}.b2"), &[h])?,
            });
        }
        let pd = config.projection_dim;
        let proj = [
            find(format!("{prefix}.proj.w1"), &[h, h])?,
            find(format!("{prefix}.proj.b1"), &[h])?,
            find(format!("{prefix}.proj.w2"), &[h, pd])?,
            find(format!("{prefix}.proj.b2"), &[pd])?,
        ];
        Ok(Self {
            config,
            prefix: prefix.to_string(),
            layers,
            proj,
        })
    }

    pub fn config(&self) -> &GinConfig {
        &self.config
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    /// Every parameter id owned by this encoder.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.layers.iter().flat_map(|l| [l.eps, l.w1, l.b1, l.w2, l.b2]).collect();
        ids.extend(self.proj);
        ids
    }

    /// Last-layer node embeddings.
    pub fn node_embeddings<'t>(&self, tape: &'t Tape, store: &ParamStore, input: &GraphInput<'t>) -> Result<Var<'t>> {
        let d = input.x.shape();
        if d.len() != 2 || d[1] != self.config.input_dim {
            return Err(Error::Contract(format!(
                "encoder expects {} input features, got shape {d:?}",
                self.config.input_dim
            )));
        }
        let n = input.num_nodes();
        let mut src = Vec::with_capacity(2 * input.edges.len());
        let mut dst = Vec::with_capacity(2 * input.edges.len());
        for &(u, v) in &input.edges {
            src.push(u);
            dst.push(v);
        }
        for &(u, v) in &input.edges {
            src.push(v);
            dst.push(u);
        }
        let m = input.edges.len();
        let directed: Vec<usize> = (0..m).chain(0..m).collect();
        let mut weight = match input.edge_weight {
            Some(w) => Some(w.gather(&directed)?),
            None => None,
        };
        if let Some(keep) = input.node_keep {
            let ks = keep.gather(&src)?;
            weight = Some(match weight {
                Some(w) => w.mul(ks)?,
                None => ks,
            });
        }

        let mut h = input.x;
        for layer in &self.layers {
            let eps = tape.param(store, layer.eps);
            let agg = h.propagate(&src, &dst, weight)?;
            let z = h.mul(eps.add_scalar(1.0))?.add(agg)?;
            let z = linear(tape, store, z, layer.w1, layer.b1)?.relu();
            let mut out = linear(tape, store, z, layer.w2, layer.b2)?;
            if self.config.standardize && n > 1 {
                out = standardize(tape, out)?;
            }
            if let Some(keep) = input.node_keep {
                out = out.scale_rows(keep)?;
            }
            h = out;
        }
        Ok(h)
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, input: &GraphInput<'t>) -> Result<Embeddings<'t>> {
        let node = self.node_embeddings(tape, store, input)?;
        let graph = segment_readout(tape, node, &input.graph_of, input.num_graphs, self.config.graph_readout)?;
        let projected = self.project(tape, store, graph)?;
        Ok(Embeddings { node, graph, projected })
    }

    /// Two-layer projection head.
    pub fn project<'t>(&self, tape: &'t Tape, store: &ParamStore, graph: Var<'t>) -> Result<Var<'t>> {
        let [w1, b1, w2, b2] = self.proj;
        let z = linear(tape, store, graph, w1, b1)?.relu();
        linear(tape, store, z, w2, b2)
    }

    /// Subgraph embeddings under the configured subgraph readout.
    pub fn subgraph_embeddings<'t>(&self, tape: &'t Tape, node: Var<'t>, sets: &[Vec<usize>]) -> Result<Var<'t>> {
        readout(tape, node, sets, self.config.subgraph_readout)
    }
}

fn standardize<'t>(tape: &'t Tape, h: Var<'t>) -> Result<Var<'t>> {
    let mean = h.reduce(Reduce::Mean, Some(0))?;
    let centred = h.add_row(mean.neg())?;
    let var = centred.mul(centred)?.reduce(Reduce::Mean, Some(0))?;
    let cols = var.shape()[0];
    let inv = tape.constant(Tensor::full(&[cols], 1.0)).div(var.add_scalar(1e-5).sqrt())?;
    centred.mul_row(inv)
}

/// Per-segment sum or mean of rows; every segment must be non-empty.
fn segment_readout<'t>(tape: &'t Tape, node: Var<'t>, seg: &[usize], segments: usize, mode: Readout) -> Result<Var<'t>> {
    let mut counts = vec![0usize; segments];
    for &s in seg {
        if s < segments {
            counts[s] += 1;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Contract(format!("readout over empty set {empty}")));
    }
    let summed = node.segment_sum(seg, segments)?;
    match mode {
        Readout::Sum => Ok(summed),
        Readout::Mean => {
            let inv = Tensor::vector(counts.iter().map(|&c| 1.0 / c as f64).collect());
            summed.scale_rows(tape.constant(inv))
        }
    }
}

/// Sum or mean of the rows in each index set.
pub fn readout<'t>(tape: &'t Tape, node: Var<'t>, sets: &[Vec<usize>], mode: Readout) -> Result<Var<'t>> {
    if let Some(i) = sets.iter().position(Vec::is_empty) {
        return Err(Error::Contract(format!("readout over empty set {i}")));
    }
    let idx: Vec<usize> = sets.iter().flatten().copied().collect();
    let seg: Vec<usize> = sets.iter().enumerate().flat_map(|(s, m)| std::iter::repeat_n(s, m.len())).collect();
    segment_readout(tape, node.gather(&idx)?, &seg, sets.len(), mode)
}

#[cfg(test)]
mod tests;
