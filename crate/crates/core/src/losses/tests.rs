use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradcheck::{check, check_params};
use crate::autodiff::{ParamStore, Tape};
use crate::encoder::GinConfig;
use crate::graph::Graph;
use crate::partition::Partition;
use crate::viewgen::{generate_view, ViewGenerator, ViewOptions};

fn random_z(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Direct pairwise summation, one row at a time.
fn brute_nt_xent(z: &Tensor, tau: f64) -> f64 {
    let n = z.rows();
    let norm = |i: usize| z.row(i).iter().map(|x| x * x).sum::<f64>().sqrt() + NORM_EPS;
    let sim = |i: usize, j: usize| {
        z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum::<f64>() / (norm(i) * norm(j))
    };
    let mut total = 0.0;
    for i in 0..n {
        let j = if i % 2 == 0 { i + 1 } else { i - 1 };
        let num = (sim(i, j) / tau).exp();
        let den: f64 = (0..n).filter(|&k| k != i).map(|k| (sim(i, k) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / n as f64
}

fn eval(z: &Tensor, tau: f64) -> f64 {
    let tape = Tape::new();
    nt_xent(tape.constant(z.clone()), tau).unwrap().item()
}

#[test]
fn matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for m in 2..=8 {
        for _ in 0..5 {
            let z = random_z(&mut rng, 2 * m, 5);
            for tau in [0.2, 0.5, 1.0] {
                let (a, b) = (eval(&z, tau), brute_nt_xent(&z, tau));
                assert!((a - b).abs() < 1e-9, "m={m} tau={tau}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn orthonormal_pairs_closed_form() {
    let z = Tensor::from_rows(&[vec![1., 0.], vec![1., 0.], vec![0., 1.], vec![0., 1.]]).unwrap();
    let e = std::f64::consts::E;
    let expected = -(e / (e + 2.0)).ln();
    assert!((eval(&z, 1.0) - expected).abs() < 1e-9);
    assert!((expected - 0.5514).abs() < 1e-4);
    let losses: Vec<f64> = [1.0, 0.5, 0.1].iter().map(|&t| eval(&z, t)).collect();
    assert!(losses[0] > losses[1] && losses[1] > losses[2], "{losses:?}");
}

#[test]
fn single_pair_rows_are_zero_and_loss_rejects_it() {
    let tape = Tape::new();
    let z = tape.constant(Tensor::from_rows(&[vec![1., 2.], vec![-3., 0.5]]).unwrap());
    let rows = nt_xent_rows(z, 0.2).unwrap().to_tensor();
    assert!(rows.data().iter().all(|v| v.abs() < 1e-12));
    assert!(matches!(nt_xent(z, 0.2), Err(Error::Contract(_))));
    let odd = tape.constant(Tensor::zeros(&[5, 2]));
    assert!(nt_xent(odd, 0.2).is_err());
    let z4 = tape.constant(Tensor::full(&[4, 2], 1.0));
    assert!(nt_xent(z4, 0.0).is_err());
}

#[test]
fn nt_xent_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let z = random_z(&mut rng, 6, 4);
        let r = check(|_, v| nt_xent(v[0], 0.5), &[z], 1e-6).unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}

#[test]
fn cosine_cases() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::from_rows(&[vec![1., 0.], vec![0., 1.]]).unwrap());
    let b = tape.constant(Tensor::from_rows(&[vec![0., 1.], vec![1., 0.]]).unwrap());
    assert_eq!(cosine(a, a).unwrap().item(), 1.0);
    assert_eq!(cosine(a, b).unwrap().item(), 0.0);
    let zero = tape.constant(Tensor::zeros(&[2, 2]));
    assert_eq!(cosine(zero, zero).unwrap().item(), 0.0);
    let c = tape.constant(Tensor::zeros(&[1, 4]));
    assert!(cosine(a, c).is_err());
}

#[test]
fn cross_entropy_closed_forms() {
    let tape = Tape::new();
    let uniform = tape.constant(Tensor::zeros(&[4, 3]));
    let labels = [0, 1, 2, 1];
    let l = classification_loss([uniform, uniform, uniform], &labels).unwrap().item();
    assert!((l - 3.0 * 3f64.ln()).abs() < 1e-12);

    let mut perfect = Tensor::zeros(&[4, 3]);
    for (i, &y) in labels.iter().enumerate() {
        perfect.data_mut()[i * 3 + y] = 1e3;
    }
    let p = tape.constant(perfect);
    assert!(classification_loss([p, p, p], &labels).unwrap().item() < 1e-3);
    assert!(cross_entropy(uniform, &[0, 1, 3, 0]).is_err());
    assert!(cross_entropy(uniform, &[0, 1]).is_err());
}

#[test]
fn cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs: Vec<Tensor> = (0..3).map(|_| random_z(&mut rng, 5, 3)).collect();
    let labels = [0, 2, 1, 1, 0];
    let r = check(|_, v| classification_loss([v[0], v[1], v[2]], &labels), &inputs, 1e-6).unwrap();
    assert!(r.max_rel_err < 1e-4, "{r:?}");
}

fn two_triangles() -> Graph {
    Graph::unattributed(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)], None).unwrap()
}

fn two_generators(seed: u64) -> (ParamStore, ViewGenerator, ViewGenerator) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = GinConfig::new(1);
    cfg.layers = 2;
    cfg.hidden_dim = 5;
    cfg.projection_dim = 3;
    let g1 = ViewGenerator::new(&mut store, "g1", cfg.clone(), &mut rng).unwrap();
    let g2 = ViewGenerator::new(&mut store, "g2", cfg, &mut rng).unwrap();
    (store, g1, g2)
}

#[test]
fn similarity_of_a_view_with_itself_is_two() {
    let g = two_triangles();
    let p = Partition::from_assignment(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
    let (store, g1, _) = two_generators(3);
    for seed in 0..50 {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = generate_view(&tape, &store, &g1, &g, &p, &ViewOptions::default(), &mut rng).unwrap();
        assert_eq!(similarity_loss(&v, &v).unwrap().item(), 2.0);
    }
}

#[test]
fn similarity_rejects_views_of_different_graphs() {
    let g = two_triangles();
    let h = Graph::unattributed(3, [(0, 1)], None).unwrap();
    let (store, g1, _) = two_generators(4);
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let v = generate_view(&tape, &store, &g1, &g, &Partition::whole(&g), &ViewOptions::default(), &mut rng).unwrap();
    let w = generate_view(&tape, &store, &g1, &h, &Partition::whole(&h), &ViewOptions::default(), &mut rng).unwrap();
    assert!(matches!(similarity_loss(&v, &w), Err(Error::Contract(_))));
}

fn pair_similarity<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    g1: &ViewGenerator,
    g2: &ViewGenerator,
    g: &Graph,
    p: &Partition,
) -> Result<Var<'t>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v1 = generate_view(tape, store, g1, g, p, &ViewOptions::default(), &mut rng)?;
    let v2 = generate_view(tape, store, g2, g, p, &ViewOptions::default(), &mut rng)?;
    similarity_loss(&v1, &v2)
}

#[test]
fn similarity_gradient_reaches_both_generators() {
    let g = two_triangles();
    let p = Partition::from_assignment(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
    let (store, g1, g2) = two_generators(5);
    let r = check_params(&store, |tape, store| pair_similarity(tape, store, &g1, &g2, &g, &p), 1e-6).unwrap();
    assert!(r.max_rel_err < 1e-4, "{r:?}");

    let tape = Tape::new();
    let loss = pair_similarity(&tape, &store, &g1, &g2, &g, &p).unwrap();
    tape.backward(loss).unwrap();
    let mut grads = store.clone();
    grads.accumulate_grads(&tape);
    let touched = |prefix: &str| {
        grads
            .ids()
            .filter(|&id| grads.name(id).starts_with(prefix))
            .any(|id| grads.grad(id).max_abs() > 0.0)
    };
    assert!(touched("g1.") && touched("g2."));
}

#[test]
fn bundle_combines_weighted_terms() {
    let tape = Tape::new();
    let w = LossWeights {
        cl: 1.0,
        sim: 0.5,
        cls: 2.0,
    };
    let b = LossBundle::new(tape.scalar(1.5), tape.scalar(0.4), Some(tape.scalar(0.25)), w).unwrap();
    assert!((b.values().total - (1.5 + 0.2 + 0.5)).abs() < 1e-15);
    let b = LossBundle::new(tape.scalar(1.5), tape.scalar(0.4), None, w).unwrap();
    assert_eq!(b.values().cls, None);
    assert!((b.values().total - 1.7).abs() < 1e-15);
    assert!(matches!(
        LossBundle::new(tape.scalar(f64::NAN), tape.scalar(0.0), None, w),
        Err(Error::Divergence(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_to_row_rescaling(seed in 0u64..100_000, m in 2usize..6, row in 0usize..12, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_z(&mut rng, 2 * m, 4);
        let row = row % (2 * m);
        let mut scaled = z.clone();
        let cols = z.cols();
        scaled.data_mut()[row * cols..(row + 1) * cols].iter_mut().for_each(|v| *v *= c);
        prop_assert!((eval(&z, 0.3) - eval(&scaled, 0.3)).abs() < 1e-9);
    }

    #[test]
    fn equivariant_to_pair_permutation(seed in 0u64..100_000, m in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_z(&mut rng, 2 * m, 3);
        let mut order: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let rows: Vec<Vec<f64>> = order.iter().flat_map(|&k| [z.row(2 * k).to_vec(), z.row(2 * k + 1).to_vec()]).collect();
        let permuted = Tensor::from_rows(&rows).unwrap();
        prop_assert!((eval(&z, 0.2) - eval(&permuted, 0.2)).abs() < 1e-9);
    }

    #[test]
    fn loss_is_finite_and_bounded_below(seed in 0u64..100_000, m in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_z(&mut rng, 2 * m, 3);
        let l = eval(&z, 0.2);
        prop_assert!(l.is_finite() && l >= 0.0);
    }
}
