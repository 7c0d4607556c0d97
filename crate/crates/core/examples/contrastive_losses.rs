//! NT-Xent and the cosine used by the view-similarity penalty, on small hand-built inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subgraph_gcl::autodiff::{Tape, Tensor};
use subgraph_gcl::losses::{cosine, nt_xent, nt_xent_rows};

fn main() -> subgraph_gcl::Result<()> {
    let tape = Tape::new();
    // Two pairs on orthonormal axes: each row's positive is its twin.
    let z = tape.constant(Tensor::matrix(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0])?);
    let e = std::f64::consts::E;
    println!("orthonormal pairs, tau=1: {:.12} (closed form {:.12})", nt_xent(z, 1.0)?.item(), -(e / (e + 2.0)).ln());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = tape.var(Tensor::matrix(8, 3, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect())?);
    for tau in [0.1, 0.2, 0.5, 1.0] {
        println!("random batch of 4 pairs, tau={tau}: {:.4}", nt_xent(z, tau)?.item());
    }
    println!("per-row terms: {:?}", nt_xent_rows(z, 0.2)?.to_tensor().data());

    let v = tape.constant(Tensor::vector(vec![0.3, -1.2, 2.0]));
    println!("cosine(v, v) = {}", cosine(v, v)?.item());
    Ok(())
}
