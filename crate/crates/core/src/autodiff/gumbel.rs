//! Gumbel-Softmax sampling over the rows of a logit matrix.

use rand::Rng;

use super::tape::Var;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Uniform draws are clamped into `[U_EPS, 1 - U_EPS]` before the double log.
pub const U_EPS: f64 = 1e-12;

pub fn gumbel_noise(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().clamp(U_EPS, 1.0 - U_EPS);
    -(-u.ln()).ln()
}

/// One relaxed draw per row: the soft sample and its argmax per row.
pub struct GumbelSample<'t> {
    pub soft: Var<'t>,
    pub argmax: Vec<usize>,
}

impl<'t> GumbelSample<'t> {
    /// Straight-through one-hot of `choices` (one column per row).
    pub fn hard_from(&self, choices: &[usize]) -> Result<Var<'t>> {
        let shape = self.soft.shape();
        let (rows, cols) = super::tensor::dims2(&shape);
        if choices.len() != rows || choices.iter().any(|&c| c >= cols) {
            return Err(Error::Contract("one-hot choice out of range".into()));
        }
        let mut hard = Tensor::zeros(&shape);
        for (r, &c) in choices.iter().enumerate() {
            hard.data_mut()[r * cols + c] = 1.0;
        }
        self.soft.straight_through(hard)
    }

    pub fn hard(&self) -> Result<Var<'t>> {
        self.hard_from(&self.argmax)
    }
}

/// Draws `softmax((logits + g) / τ)` row-wise with Gumbel noise `g`.
pub fn gumbel_sample<'t>(logits: Var<'t>, temperature: f64, rng: &mut impl Rng) -> Result<GumbelSample<'t>> {
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("gumbel temperature must be > 0, got {temperature}")));
    }
    let shape = logits.shape();
    if !logits.value().data().iter().all(|v| !v.is_nan()) {
        return Err(Error::Domain("gumbel_softmax received NaN logits".into()));
    }
    let noise = Tensor::new(shape.clone(), (0..logits.value().numel()).map(|_| gumbel_noise(rng)).collect())?;
    let soft = logits.add_const(&noise)?.softmax(temperature)?;
    let argmax = {
        let s = soft.value();
        let (rows, cols) = s.dims2();
        (0..rows)
            .map(|r| {
                let row = &s.data()[r * cols..(r + 1) * cols];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    };
    Ok(GumbelSample { soft, argmax })
}

/// Gumbel-Softmax; with `hard`, the forward value is one-hot (straight-through).
pub fn gumbel_softmax<'t>(logits: Var<'t>, temperature: f64, hard: bool, rng: &mut impl Rng) -> Result<Var<'t>> {
    let sample = gumbel_sample(logits, temperature, rng)?;
    if hard {
        sample.hard()
    } else {
        Ok(sample.soft)
    }
}
