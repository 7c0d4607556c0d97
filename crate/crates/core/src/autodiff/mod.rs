//! Dense reverse-mode automatic differentiation in `f64`.

pub mod gradcheck;
mod gumbel;
mod params;
mod tape;
mod tensor;

pub use gumbel::{gumbel_noise, gumbel_sample, gumbel_softmax, GumbelSample, U_EPS};
pub use params::{ParamId, ParamStore, PARAMS_FORMAT, PARAMS_VERSION};
pub use tape::{concat, Elementwise, Reduce, Tape, Var, LOG_EPS};
pub use tensor::Tensor;

/// Applies a linear layer `x·W + b` with parameters taken from `store`.
pub fn linear<'t>(tape: &'t Tape, store: &ParamStore, x: Var<'t>, w: ParamId, b: ParamId) -> crate::Result<Var<'t>> {
    x.matmul(tape.param(store, w))?.add_row(tape.param(store, b))
}

#[cfg(test)]
mod tests;
