use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::substream;

const LBFGS_MEMORY: usize = 10;
const MAX_ITERS: usize = 500;
const GRAD_TOL: f64 = 1e-6;
const REFOLD_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub protocol: String,
    pub mean: f64,
    pub std: f64,
    pub scores: Vec<f64>,
}

impl EvalSummary {
    pub fn from_scores(protocol: impl Into<String>, scores: Vec<f64>) -> Self {
        let n = scores.len().max(1) as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        EvalSummary {
            protocol: protocol.into(),
            mean,
            std: var.sqrt(),
            scores,
        }
    }
}

/// Multinomial logistic regression with an L2 penalty on the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

pub(super) fn objective(x: &Tensor, y: &[usize], classes: usize, l2: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
    let (n, d) = x.dims2();
    let (w, b) = theta.split_at(d * classes);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (gw, gb) = grad.split_at_mut(d * classes);
    let mut loss = 0.0;
    let mut logits = vec![0.0; classes];
    for i in 0..n {
        let row = x.row(i);
        for (c, l) in logits.iter_mut().enumerate() {
            *l = b[c] + row.iter().enumerate().map(|(j, xj)| xj * w[j * classes + c]).sum::<f64>();
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        loss += mx + z.ln() - logits[y[i]];
        for c in 0..classes {
            let p = (logits[c] - mx).exp() / z - if c == y[i] { 1.0 } else { 0.0 };
            gb[c] += p / n as f64;
            for (j, xj) in row.iter().enumerate() {
                gw[j * classes + c] += p * xj / n as f64;
            }
        }
    }
    loss /= n as f64;
    for (g, wv) in gw.iter_mut().zip(w) {
        loss += 0.5 * l2 * wv * wv;
        *g += l2 * wv;
    }
    loss
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with a backtracking Armijo line search.
fn lbfgs(mut f: impl FnMut(&[f64], &mut [f64]) -> f64, mut x: Vec<f64>) -> Vec<f64> {
    let dim = x.len();
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut g_new = vec![0.0; dim];
    for _ in 0..MAX_ITERS {
        if dot(&g, &g).sqrt() < GRAD_TOL {
            break;
        }
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            q.iter_mut().zip(&y_hist[i]).for_each(|(qv, yv)| *qv -= alpha[i] * yv);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            q.iter_mut().zip(&s_hist[i]).for_each(|(qv, sv)| *qv += (alpha[i] - beta) * sv);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = 1.0;
        let mut x_new = vec![0.0; dim];
        let mut f_new;
        loop {
            x_new.iter_mut().zip(&x).zip(&dir).for_each(|((n, xv), dv)| *n = xv + step * dv);
            f_new = f(&x_new, &mut g_new);
            if f_new <= fx + 1e-4 * step * slope || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        if step < 1e-12 {
            break;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let converged = (fx - f_new).abs() <= 1e-12 * fx.abs().max(1.0);
        if dot(&s, &y) > 1e-12 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if converged {
            break;
        }
    }
    x
}

impl LogisticRegression {
    pub fn fit(x: &Tensor, y: &[usize], classes: usize, l2: f64) -> Result<Self> {
        let (n, d) = x.dims2();
        if n != y.len() || n == 0 {
            return Err(Error::Contract(format!("logistic regression: {n} rows for {} labels", y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::Contract(format!("label {bad} out of range for {classes} classes")));
        }
        let theta = lbfgs(
            |t, g| objective(x, y, classes, l2, t, g),
            vec![0.0; d * classes + classes],
        );
        let (w, b) = theta.split_at(d * classes);
        Ok(LogisticRegression {
            weights: Tensor::matrix(d, classes, w.to_vec())?,
            bias: b.to_vec(),
        })
    }

    pub fn predict(&self, x: &Tensor) -> Vec<usize> {
        let classes = self.bias.len();
        (0..x.rows())
            .map(|i| {
                let row = x.row(i);
                let score = |c: usize| self.bias[c] + row.iter().enumerate().map(|(j, v)| v * self.weights.get(j, c)).sum::<f64>();
                let mut best = 0;
                for c in 1..classes {
                    if score(c) > score(best) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Column means and standard deviations of the given rows; zero spread maps to 1.
pub fn zscore_fit(x: &Tensor, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for &r in rows {
        mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v / n);
    }
    let mut std = vec![0.0; d];
    for &r in rows {
        std.iter_mut().zip(x.row(r)).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
    }
    let std = std.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
    (mean, std)
}

pub fn zscore_apply(x: &Tensor, rows: &[usize], mean: &[f64], std: &[f64]) -> Tensor {
    let d = x.cols();
    let data = rows
        .iter()
        .flat_map(|&r| x.row(r).iter().enumerate().map(|(j, v)| (v - mean[j]) / std[j]).collect::<Vec<_>>())
        .collect();
    Tensor::matrix(rows.len(), d, data).expect("shape matches")
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut rng = substream(seed, &[0x50]);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    out
}

fn distinct(labels: &[usize], rows: impl Iterator<Item = usize>) -> usize {
    let mut seen: Vec<usize> = rows.map(|i| labels[i]).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// k-fold cross-validated accuracy of a logistic-regression probe on fixed embeddings.
pub fn linear_probe_eval(embeddings: &Tensor, labels: &[usize], folds: usize, l2: f64, seed: u64) -> Result<EvalSummary> {
    let n = labels.len();
    if embeddings.rank() != 2 || embeddings.rows() != n {
        return Err(Error::Contract(format!(
            "probe: embeddings {:?} for {n} labels",
            embeddings.shape()
        )));
    }
    if folds < 2 || folds > n {
        return Err(Error::Parameter(format!("probe folds must be in [2, {n}], got {folds}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    if distinct(labels, 0..n) < 2 {
        return Err(Error::Stratification("probe needs at least two classes".into()));
    }
    for attempt in 0..REFOLD_ATTEMPTS {
        let assignment = stratified_folds(labels, folds, seed.wrapping_add(attempt));
        let trains: Vec<Vec<usize>> = assignment
            .iter()
            .map(|test| (0..n).filter(|i| test.binary_search(i).is_err()).collect())
            .collect();
        if trains.iter().any(|t| distinct(labels, t.iter().copied()) < 2) {
            continue;
        }
        let mut scores = Vec::with_capacity(folds);
        for (test, train) in assignment.iter().zip(&trains) {
            let (mean, std) = zscore_fit(embeddings, train);
            let xt = zscore_apply(embeddings, train, &mean, &std);
            let yt: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let model = LogisticRegression::fit(&xt, &yt, classes, l2)?;
            let xs = zscore_apply(embeddings, test, &mean, &std);
            let pred = model.predict(&xs);
            let correct = test.iter().zip(pred).filter(|&(&i, p)| labels[i] == p).count();
            scores.push(correct as f64 / test.len().max(1) as f64);
        }
        return Ok(EvalSummary::from_scores(format!("linear-probe-{folds}-fold"), scores));
    }
    Err(Error::Stratification(format!(
        "no {folds}-fold split with two classes in every training fold"
    )))
}
