//! Empirical argmax frequencies of Gumbel-perturbed logits against softmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subgraph_gcl::autodiff::{gumbel_sample, Tape, Tensor};

const SAMPLES: usize = 100_000;

fn main() -> subgraph_gcl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let tape = Tape::new();
    let l = tape.constant(Tensor::matrix(1, 5, logits.clone())?);
    let expected = l.softmax(1.0)?.to_tensor();

    // One row per sample keeps the tape small.
    let batch = Tensor::matrix(SAMPLES, 5, logits.iter().cycle().take(SAMPLES * 5).copied().collect())?;
    let tape = Tape::new();
    let draw = gumbel_sample(tape.constant(batch), 1.0, &mut rng)?;
    let mut counts = [0usize; 5];
    draw.argmax.iter().for_each(|&c| counts[c] += 1);

    println!("class  softmax  empirical");
    for c in 0..5 {
        println!("{c:>5}  {:.4}   {:.4}", expected.data()[c], counts[c] as f64 / SAMPLES as f64);
    }
    Ok(())
}
