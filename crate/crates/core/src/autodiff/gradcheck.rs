//! Central finite-difference gradient checks.
//!
//! Only forward evaluations are used, so the check is independent of every
//! backward rule it audits.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor for the relative error, so exact zeros compare absolutely.
pub const REL_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_analytic: f64,
    pub evaluations: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients of scalar `f` at `inputs` with central differences of step `h`.
pub fn check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = f(&tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut report = GradCheck {
        max_rel_err: 0.0,
        max_abs_analytic: 0.0,
        evaluations: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let x0 = input.data()[i];
            work[k].data_mut()[i] = x0 + h;
            let fp = eval(&work)?;
            work[k].data_mut()[i] = x0 - h;
            let fm = eval(&work)?;
            work[k].data_mut()[i] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[k].data()[i];
            report.max_rel_err = report.max_rel_err.max(rel_err(a, numeric));
            report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
            report.evaluations += 2;
        }
    }
    Ok(report)
}

/// Like [`check`], but perturbs every parameter of `store` that `f` reads.
pub fn check_params<F>(store: &ParamStore, f: F, h: f64) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let out = f(&tape, store)?;
    tape.backward(out)?;
    let mut grads = store.clone();
    grads.zero_grad();
    grads.accumulate_grads(&tape);

    let mut report = GradCheck {
        max_rel_err: 0.0,
        max_abs_analytic: 0.0,
        evaluations: 0,
    };
    let mut work = store.clone();
    for id in store.ids() {
        for i in 0..store.value(id).numel() {
            let x0 = store.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = x0 + h;
            let fp = f(&Tape::new(), &work)?.item();
            work.value_mut(id).data_mut()[i] = x0 - h;
            let fm = f(&Tape::new(), &work)?.item();
            work.value_mut(id).data_mut()[i] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = grads.grad(id).data()[i];
            report.max_rel_err = report.max_rel_err.max(rel_err(a, numeric));
            report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
            report.evaluations += 2;
        }
    }
    Ok(report)
}
