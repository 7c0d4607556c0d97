//! Finite-difference audit of a few tape primitives and of a GIN forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subgraph_gcl::autodiff::gradcheck::{check, check_params};
use subgraph_gcl::autodiff::{ParamStore, Tensor};
use subgraph_gcl::encoder::{GinConfig, GinEncoder, GraphInput};
use subgraph_gcl::graph::Graph;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> subgraph_gcl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[4, 2]);

    let r = check(|_, v| v[0].matmul(v[1])?.sum(), &[a.clone(), b.clone()], 1e-6)?;
    println!("matmul         max rel err {:.2e}", r.max_rel_err);
    let r = check(|_, v| v[0].softmax(0.5)?.mul(v[0])?.sum(), std::slice::from_ref(&a), 1e-6)?;
    println!("softmax        max rel err {:.2e}", r.max_rel_err);
    let r = check(|_, v| v[0].logsumexp()?.sum(), std::slice::from_ref(&a), 1e-6)?;
    println!("logsumexp      max rel err {:.2e}", r.max_rel_err);
    let r = check(|_, v| v[0].exp().sqrt().log().mean(), &[a], 1e-6)?;
    println!("exp/sqrt/log   max rel err {:.2e}", r.max_rel_err);

    let g = Graph::new(random(&mut rng, &[5, 3]), [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], None)?;
    let mut store = ParamStore::new();
    let mut cfg = GinConfig::new(3);
    cfg.hidden_dim = 4;
    cfg.projection_dim = 4;
    let enc = GinEncoder::new(&mut store, "enc", cfg, &mut rng)?;
    let r = check_params(
        &store,
        |tape, s| {
            let out = enc.forward(tape, s, &GraphInput::from_graph(tape, &g))?;
            out.projected.mul(out.projected)?.sum()
        },
        1e-6,
    )?;
    println!("GIN encoder    max rel err {:.2e} over {} evaluations", r.max_rel_err, r.evaluations);
    Ok(())
}
