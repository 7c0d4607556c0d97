//! Contrastive, view-similarity and classification objectives.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Reduce, Tensor, Var};
use crate::error::{Error, Result};
use crate::viewgen::AugmentedView;

/// Added to row norms before cosine normalization.
pub const NORM_EPS: f64 = 1e-12;

const DIAG_MASK: f64 = -1e30;

/// Per-row contrastive terms ℓ(i, partner(i)) for rows paired as (0,1), (2,3), ….
///
/// Returned as a vector of length 2M. A single pair (M = 1) gives zeros.
pub fn nt_xent_rows<'t>(z: Var<'t>, temperature: f64) -> Result<Var<'t>> {
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("nt_xent temperature must be > 0, got {temperature}")));
    }
    let shape = z.shape();
    if shape.len() != 2 || shape[0] == 0 || !shape[0].is_multiple_of(2) {
        return Err(Error::Contract(format!("nt_xent expects 2M x P rows, got {shape:?}")));
    }
    let rows = shape[0];
    let tape = z.tape();
    let norms = z.mul(z)?.reduce(Reduce::Sum, Some(1))?.sqrt().add_scalar(NORM_EPS);
    let inv = tape.constant(Tensor::full(&[rows], 1.0)).div(norms)?;
    let zn = z.scale_rows(inv)?;
    let sim = zn.matmul(zn.transpose()?)?.mul_scalar(1.0 / temperature);

    let mut mask = Tensor::zeros(&[rows, rows]);
    let mut partner = Tensor::zeros(&[rows, rows]);
    for i in 0..rows {
        mask.data_mut()[i * rows + i] = DIAG_MASK;
        partner.data_mut()[i * rows + (i ^ 1)] = 1.0;
    }
    let lse = sim.add_const(&mask)?.logsumexp()?;
    let pos = sim.mul(tape.constant(partner))?.reduce(Reduce::Sum, Some(1))?;
    lse.sub(pos)
}

/// Mean of [`nt_xent_rows`] over all 2M rows; needs M ≥ 2.
pub fn nt_xent<'t>(z: Var<'t>, temperature: f64) -> Result<Var<'t>> {
    let rows = z.shape().first().copied().unwrap_or(0);
    if rows < 4 {
        return Err(Error::Contract(format!(
            "nt_xent needs at least two graphs (four rows), got {rows} rows"
        )));
    }
    nt_xent_rows(z, temperature)?.mean()
}

/// Cosine similarity of two equally shaped arrays, flattened.
pub fn cosine<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    if a.shape() != b.shape() {
        return Err(Error::Contract(format!(
            "cosine of mismatched shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let dot = a.mul(b)?.sum()?;
    let aa = a.mul(a)?.sum()?;
    let bb = b.mul(b)?.sum()?;
    dot.div(aa.mul(bb)?.sqrt().clamp_min(NORM_EPS))
}

/// sim(S₁, S₂) + sim(A₁, A₂) over the relaxed state and adjacency.
pub fn similarity_loss<'t>(v1: &AugmentedView<'t>, v2: &AugmentedView<'t>) -> Result<Var<'t>> {
    if v1.num_nodes != v2.num_nodes || v1.state_soft.shape() != v2.state_soft.shape() {
        return Err(Error::Contract(format!(
            "similarity_loss needs views of one graph: {} vs {} nodes, states {:?} vs {:?}",
            v1.num_nodes,
            v2.num_nodes,
            v1.state_soft.shape(),
            v2.state_soft.shape()
        )));
    }
    cosine(v1.state_soft, v2.state_soft)?.add(cosine(v1.adjacency_soft, v2.adjacency_soft)?)
}

/// Softmax cross-entropy averaged over rows.
pub fn cross_entropy<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() || shape[0] == 0 {
        return Err(Error::Contract(format!(
            "cross_entropy: logits {shape:?} for {} labels",
            labels.len()
        )));
    }
    let (m, c) = (shape[0], shape[1]);
    let mut onehot = Tensor::zeros(&[m, c]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Contract(format!("label {y} out of range for {c} classes")));
        }
        onehot.data_mut()[i * c + y] = 1.0;
    }
    let picked = logits.mul(logits.tape().constant(onehot))?.reduce(Reduce::Sum, Some(1))?;
    logits.logsumexp()?.sub(picked)?.mean()
}

/// CE on the original graphs plus CE on each of the two views.
pub fn classification_loss<'t>(logits: [Var<'t>; 3], labels: &[usize]) -> Result<Var<'t>> {
    let [a, b, c] = logits;
    cross_entropy(a, labels)?
        .add(cross_entropy(b, labels)?)?
        .add(cross_entropy(c, labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cl: f64,
    pub sim: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cl: 1.0,
            sim: 0.5,
            cls: 1.0,
        }
    }
}

/// Scalar loss values of one step, detached from the tape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub cl: f64,
    pub sim: f64,
    pub cls: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LossBundle<'t> {
    pub cl: Var<'t>,
    pub sim: Var<'t>,
    pub cls: Option<Var<'t>>,
    pub weights: LossWeights,
    pub total: Var<'t>,
}

impl<'t> LossBundle<'t> {
    pub fn new(cl: Var<'t>, sim: Var<'t>, cls: Option<Var<'t>>, weights: LossWeights) -> Result<Self> {
        let mut total = cl.mul_scalar(weights.cl).add(sim.mul_scalar(weights.sim))?;
        if let Some(c) = cls {
            total = total.add(c.mul_scalar(weights.cls))?;
        }
        let bundle = LossBundle {
            cl,
            sim,
            cls,
            weights,
            total,
        };
        let v = bundle.values();
        if !v.total.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss: cl={} sim={} cls={:?}",
                v.cl, v.sim, v.cls
            )));
        }
        Ok(bundle)
    }

    pub fn values(&self) -> LossValues {
        LossValues {
            cl: self.cl.item(),
            sim: self.sim.item(),
            cls: self.cls.map(|c| c.item()),
            total: self.total.item(),
        }
    }
}

#[cfg(test)]
mod tests;
