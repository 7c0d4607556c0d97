use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradcheck::check_params;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One layer, width 1, with both MLP matrices set to 1 and biases 0.
fn identity_encoder(store: &mut ParamStore) -> GinEncoder {
    let mut cfg = GinConfig::new(1);
    cfg.layers = 1;
    cfg.hidden_dim = 1;
    cfg.projection_dim = 1;
    let enc = GinEncoder::new(store, "enc", cfg, &mut rng(0)).unwrap();
    for name in ["enc.gin0.w1", "enc.gin0.w2"] {
        let id = store.id(name).unwrap();
        store.value_mut(id).data_mut()[0] = 1.0;
    }
    enc
}

fn random_graph(n: usize, p: f64, d: usize, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = Tensor::matrix(n, d, (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    Graph::new(x, edges, None).unwrap()
}

#[test]
fn triangle_with_identity_mlp_sums_neighbours() {
    let mut store = ParamStore::new();
    let enc = identity_encoder(&mut store);
    let g = Graph::unattributed(3, [(0, 1), (1, 2), (0, 2)], None).unwrap();
    let tape = Tape::new();
    let h = enc.node_embeddings(&tape, &store, &GraphInput::from_graph(&tape, &g)).unwrap();
    assert_eq!(h.value().data(), &[3.0, 3.0, 3.0]);
}

#[test]
fn isolated_node_sees_only_itself() {
    let mut store = ParamStore::new();
    let enc = identity_encoder(&mut store);
    let eps = store.id("enc.gin0.eps").unwrap();
    store.value_mut(eps).data_mut()[0] = 0.5;
    let g = Graph::unattributed(2, [], None).unwrap();
    let tape = Tape::new();
    let h = enc.node_embeddings(&tape, &store, &GraphInput::from_graph(&tape, &g)).unwrap();
    assert_eq!(h.value().data(), &[1.5, 1.5]);
}

#[test]
fn wrong_feature_width_is_a_contract_error() {
    let mut store = ParamStore::new();
    let enc = GinEncoder::new(&mut store, "e", GinConfig::new(3), &mut rng(1)).unwrap();
    let g = Graph::unattributed(2, [(0, 1)], None).unwrap();
    let tape = Tape::new();
    assert!(matches!(
        enc.forward(&tape, &store, &GraphInput::from_graph(&tape, &g)),
        Err(Error::Contract(_))
    ));
}

#[test]
fn readout_examples() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::matrix(2, 1, vec![2.0, 4.0]).unwrap());
    assert_eq!(readout(&tape, x, &[vec![0, 1]], Readout::Mean).unwrap().value().data(), &[3.0]);
    assert_eq!(readout(&tape, x, &[vec![1]], Readout::Sum).unwrap().value().data(), &[4.0]);
    assert!(matches!(readout(&tape, x, &[vec![]], Readout::Sum), Err(Error::Contract(_))));
}

#[test]
fn size_weighted_subgraph_means_equal_graph_mean() {
    let tape = Tape::new();
    let mut r = rng(4);
    let h = Tensor::matrix(7, 3, (0..21).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let x = tape.constant(h);
    let sets = vec![vec![0, 3], vec![1, 2, 6], vec![4], vec![5]];
    let sub = readout(&tape, x, &sets, Readout::Mean).unwrap().to_tensor();
    let whole = readout(&tape, x, &[(0..7).collect()], Readout::Mean).unwrap().to_tensor();
    for j in 0..3 {
        let weighted: f64 = sets.iter().enumerate().map(|(s, m)| sub.get(s, j) * m.len() as f64 / 7.0).sum();
        assert!((weighted - whole.get(0, j)).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (seed, standardize) in [(0, false), (1, false), (2, true)] {
        let g = random_graph(6, 0.5, 3, seed);
        let mut cfg = GinConfig::new(3);
        cfg.layers = 2;
        cfg.hidden_dim = 4;
        cfg.projection_dim = 3;
        cfg.standardize = standardize;
        let mut store = ParamStore::new();
        let enc = GinEncoder::new(&mut store, "e", cfg, &mut rng(seed)).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.value_mut(id).data_mut() {
                *v += 0.1 * rng(seed + 9).gen_range(-1.0..1.0);
            }
        }
        let m = g.num_edges();
        let keep = Tensor::vector((0..6).map(|i| 0.3 + 0.1 * i as f64).collect());
        let w = Tensor::vector((0..m).map(|i| 0.2 + 0.7 * ((i * 37 % 11) as f64 / 11.0)).collect());
        let report = check_params(
            &store,
            |tape, store| {
                let mut input = GraphInput::from_graph(tape, &g);
                input.edge_weight = Some(tape.constant(w.clone()));
                input.node_keep = Some(tape.constant(keep.clone()));
                let e = enc.forward(tape, store, &input)?;
                e.graph.sum()?.add(e.projected.sum()?)
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
        assert!(report.max_abs_analytic > 0.0);
    }
}

#[test]
fn edge_weight_and_keep_receive_gradient() {
    let g = random_graph(5, 0.6, 2, 3);
    let mut store = ParamStore::new();
    let enc = GinEncoder::new(&mut store, "e", GinConfig::new(2), &mut rng(3)).unwrap();
    let tape = Tape::new();
    let mut input = GraphInput::from_graph(&tape, &g);
    let w = tape.var(Tensor::full(&[g.num_edges()], 1.0));
    let k = tape.var(Tensor::full(&[5], 1.0));
    input.edge_weight = Some(w);
    input.node_keep = Some(k);
    let e = enc.forward(&tape, &store, &input).unwrap();
    tape.backward(e.projected.sum().unwrap()).unwrap();
    assert!(w.grad().unwrap().max_abs() > 0.0);
    assert!(k.grad().unwrap().max_abs() > 0.0);
}

#[test]
fn unit_weights_match_unweighted_forward() {
    let g = random_graph(7, 0.4, 2, 8);
    let mut store = ParamStore::new();
    let enc = GinEncoder::new(&mut store, "e", GinConfig::new(2), &mut rng(8)).unwrap();
    let tape = Tape::new();
    let plain = enc.forward(&tape, &store, &GraphInput::from_graph(&tape, &g)).unwrap();
    let mut input = GraphInput::from_graph(&tape, &g);
    input.edge_weight = Some(tape.constant(Tensor::full(&[g.num_edges()], 1.0)));
    input.node_keep = Some(tape.constant(Tensor::full(&[7], 1.0)));
    let weighted = enc.forward(&tape, &store, &input).unwrap();
    assert_eq!(plain.projected.to_tensor(), weighted.projected.to_tensor());
}

#[test]
fn batch_rows_match_single_graph_runs() {
    let gs: Vec<Graph> = (0..3).map(|s| random_graph(4 + s as usize, 0.5, 2, s)).collect();
    let mut store = ParamStore::new();
    let enc = GinEncoder::new(&mut store, "e", GinConfig::new(2), &mut rng(5)).unwrap();
    let tape = Tape::new();
    let refs: Vec<&Graph> = gs.iter().collect();
    let batch = enc.forward(&tape, &store, &GraphInput::from_graphs(&tape, &refs)).unwrap().graph.to_tensor();
    for (i, g) in gs.iter().enumerate() {
        let single = enc.forward(&tape, &store, &GraphInput::from_graph(&tape, g)).unwrap().graph.to_tensor();
        for (a, b) in batch.row(i).iter().zip(single.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

/// 1-WL colour refinement cannot tell C6 from two triangles with constant
/// features, so neither can a sum-aggregating GIN. The 6-path has different
/// degrees and is separated from both.
#[test]
fn sum_readout_follows_wl_expressiveness() {
    let c6 = Graph::unattributed(6, (0..6).map(|i| (i, (i + 1) % 6)), None).unwrap();
    let tt = Graph::unattributed(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], None).unwrap();
    let p6 = Graph::unattributed(6, (0..5).map(|i| (i, i + 1)), None).unwrap();
    let mut store = ParamStore::new();
    let enc = GinEncoder::new(&mut store, "e", GinConfig::new(1), &mut rng(11)).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.value_mut(id).data_mut() {
            *v += 0.05;
        }
    }
    let tape = Tape::new();
    let emb = |g: &Graph| enc.forward(&tape, &store, &GraphInput::from_graph(&tape, g)).unwrap().graph.to_tensor();
    let (a, b, c) = (emb(&c6), emb(&tt), emb(&p6));
    let diff = |x: &Tensor, y: &Tensor| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(diff(&a, &b) < 1e-12);
    assert!(diff(&a, &c) > 1e-6);
}

proptest! {
    #[test]
    fn graph_embedding_is_permutation_invariant(seed in 0u64..300, n in 2usize..10) {
        let g = random_graph(n, 0.4, 3, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(seed + 1));
        let h = g.permuted(&perm).unwrap();
        let mut store = ParamStore::new();
        let enc = GinEncoder::new(&mut store, "e", GinConfig::new(3), &mut rng(seed)).unwrap();
        let tape = Tape::new();
        let a = enc.forward(&tape, &store, &GraphInput::from_graph(&tape, &g)).unwrap();
        let b = enc.forward(&tape, &store, &GraphInput::from_graph(&tape, &h)).unwrap();
        prop_assert!(a.graph.value().is_finite());
        for (x, y) in a.graph.value().data().iter().zip(b.graph.value().data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
