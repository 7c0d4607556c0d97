use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check, check_params};
use super::*;
use crate::Error;

fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn matmul_identity_and_hand_product() {
    let tape = Tape::new();
    let i2 = tape.constant(Tensor::eye(2));
    let m = tape.constant(t(2, 2, &[1., 2., 3., 4.]));
    assert_eq!(i2.matmul(m).unwrap().value().data(), &[1., 2., 3., 4.]);

    let a = tape.constant(t(1, 2, &[1., 2.]));
    let b = tape.constant(t(2, 1, &[3., 4.]));
    assert_eq!(a.matmul(b).unwrap().item(), 11.0);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match a.matmul(b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_of_sum_is_ones() {
    let tape = Tape::new();
    let a = tape.var(t(2, 2, &[1., 2., 3., 4.]));
    let b = tape.constant(Tensor::eye(2));
    let s = a.matmul(b).unwrap().sum().unwrap();
    tape.backward(s).unwrap();
    assert_eq!(a.grad().unwrap().data(), &[1., 1., 1., 1.]);

    let fd = check(|_, v| v[0].matmul(v[1])?.sum(), &[t(2, 2, &[1., 2., 3., 4.]), Tensor::eye(2)], 1e-6).unwrap();
    assert!(fd.max_rel_err < 1e-6, "{fd:?}");
}

#[test]
fn relu_forward_and_negative_branch() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![-1., 0., 2.]));
    let y = x.relu();
    assert_eq!(y.value().data(), &[0., 0., 2.]);
    tape.backward(y.sum().unwrap()).unwrap();
    assert_eq!(x.grad().unwrap().data()[0], 0.0);
}

#[test]
fn log_derivative_and_clamp() {
    let tape = Tape::new();
    let x = tape.var(Tensor::scalar(2.0));
    tape.backward(x.log()).unwrap();
    assert!((x.grad().unwrap().item() - 0.5).abs() < 1e-15);
    let fd = check(|_, v| Ok(v[0].log()), &[Tensor::scalar(2.0)], 1e-6).unwrap();
    assert!(fd.max_rel_err < 1e-8);

    let z = tape.constant(Tensor::scalar(0.0)).log();
    assert_eq!(z.item(), LOG_EPS.ln());
    assert!(z.item().is_finite());
}

#[test]
fn elementwise_rejects_incompatible_shapes() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[3]));
    let b = tape.constant(Tensor::zeros(&[2]));
    assert!(matches!(a.add(b), Err(Error::Dimension { .. })));
    let s = tape.scalar(2.0);
    assert_eq!(a.add_scalar(1.0).mul(s).unwrap().value().data(), &[2., 2., 2.]);
}

#[test]
fn softmax_closed_forms() {
    let tape = Tape::new();
    let u = tape.constant(Tensor::vector(vec![0., 0., 0.])).softmax(1.0).unwrap();
    for &p in u.value().data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let v = tape.constant(Tensor::vector(vec![2f64.ln(), 0.])).softmax(1.0).unwrap();
    assert!((v.value().data()[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((v.value().data()[1] - 1.0 / 3.0).abs() < 1e-15);
    assert!(matches!(
        tape.constant(Tensor::vector(vec![1.])).softmax(0.0),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn softmax_jacobian_matches_finite_differences() {
    let x = Tensor::vector(vec![1., 2., 3.]);
    for j in 0..3 {
        for &tau in &[1.0, 0.5] {
            let fd = check(move |_, v| v[0].softmax(tau)?.gather(&[j])?.sum(), std::slice::from_ref(&x), 1e-6).unwrap();
            assert!(fd.max_rel_err < 1e-5, "component {j}, tau {tau}: {fd:?}");
        }
    }
}

#[test]
fn concat_identity_and_gradient() {
    let tape = Tape::new();
    let a = tape.var(t(1, 1, &[1.]));
    let b = tape.var(t(1, 1, &[2.]));
    let c = concat(&[a, b], 0).unwrap();
    assert_eq!(c.value().data(), &[1., 2.]);
    assert_eq!(c.shape(), vec![2, 1]);
    tape.backward(c.sum().unwrap()).unwrap();
    assert_eq!(a.grad().unwrap().data(), &[1.]);
    assert_eq!(b.grad().unwrap().data(), &[1.]);

    let single = concat(&[a], 0).unwrap();
    assert_eq!(single.to_tensor(), a.to_tensor());

    let bad = tape.constant(Tensor::zeros(&[1, 2]));
    assert!(matches!(concat(&[a, bad], 0), Err(Error::Dimension { .. })));
}

#[test]
fn reduce_semantics() {
    let tape = Tape::new();
    assert_eq!(tape.constant(Tensor::vector(vec![2., 4.])).mean().unwrap().item(), 3.0);

    let x = tape.var(Tensor::vector(vec![1., 3., 2.]));
    let m = x.max().unwrap();
    assert_eq!(m.item(), 3.0);
    tape.backward(m).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[0., 1., 0.]);

    let tie = tape.var(Tensor::vector(vec![5., 5.]));
    tape.backward(tie.max().unwrap()).unwrap();
    assert_eq!(tie.grad().unwrap().data(), &[1., 0.]);

    let empty = tape.constant(Tensor::vector(vec![]));
    assert!(matches!(empty.sum(), Err(Error::Domain(_))));
}

#[test]
fn backward_accumulates_and_requires_scalar_root() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![1., 2., 3.]));
    let s = x.sum().unwrap();
    tape.backward(s).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[1., 1., 1.]);
    tape.backward(s).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[2., 2., 2.]);
    tape.zero_grad();
    tape.backward(s).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[1., 1., 1.]);

    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn shared_subexpression_equals_expanded_tree() {
    // f = (x·y) + (x·y)² with x·y computed once vs twice.
    let (xv, yv) = (Tensor::vector(vec![0.3, -1.2]), Tensor::vector(vec![2.0, 0.5]));
    let shared = Tape::new();
    let (x, y) = (shared.var(xv.clone()), shared.var(yv.clone()));
    let p = x.mul(y).unwrap();
    shared.backward(p.add(p.mul(p).unwrap()).unwrap().sum().unwrap()).unwrap();

    let tree = Tape::new();
    let (x2, y2) = (tree.var(xv), tree.var(yv));
    let (p1, p2, p3) = (x2.mul(y2).unwrap(), x2.mul(y2).unwrap(), x2.mul(y2).unwrap());
    tree.backward(p1.add(p2.mul(p3).unwrap()).unwrap().sum().unwrap()).unwrap();

    for (a, b) in [(x.grad().unwrap(), x2.grad().unwrap()), (y.grad().unwrap(), y2.grad().unwrap())] {
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }
}

#[test]
fn three_layer_mlp_parameters_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let dims = [4, 6, 5, 1];
    let mut layers = Vec::new();
    for l in 0..3 {
        let w = store.add_glorot(format!("mlp.layer{l}.w"), dims[l], dims[l + 1], &mut rng).unwrap();
        let b = store.add(format!("mlp.layer{l}.b"), random(&mut rng, &[dims[l + 1]])).unwrap();
        layers.push((w, b));
    }
    let x = random(&mut rng, &[3, 4]);
    let fd = check_params(
        &store,
        |tape, store| {
            let mut h = tape.constant(x.clone());
            for (l, &(w, b)) in layers.iter().enumerate() {
                h = linear(tape, store, h, w, b)?;
                if l < 2 {
                    h = h.relu();
                }
            }
            h.sum()
        },
        1e-6,
    )
    .unwrap();
    assert!(fd.max_rel_err < 1e-4, "{fd:?}");
    assert!(fd.max_abs_analytic > 0.0);
}

#[test]
fn gumbel_hard_is_one_hot_with_soft_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tape = Tape::new();
    let logits = tape.var(t(4, 3, &[0.1, -0.3, 0.7, 1.0, 1.0, 1.0, -2.0, 0.0, 2.0, 0.5, 0.5, -0.5]));
    let y = gumbel_softmax(logits, 0.5, true, &mut rng).unwrap();
    for r in 0..4 {
        let row = y.value().row(r).to_vec();
        assert_eq!(row.iter().sum::<f64>(), 1.0);
        assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
    }
    let w = tape.constant(t(4, 3, &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]));
    tape.backward(y.mul(w).unwrap().sum().unwrap()).unwrap();
    assert!(logits.grad().unwrap().max_abs() > 0.0);
    assert!(matches!(gumbel_softmax(logits, 0.0, true, &mut rng), Err(Error::Parameter(_))));
}

#[test]
fn gumbel_argmax_frequencies_follow_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    for (logits, expect) in [(vec![0.0, 0.0], 0.5), (vec![9f64.ln(), 0.0], 0.9)] {
        let mut hits = 0usize;
        for _ in 0..n {
            let tape = Tape::new();
            let s = gumbel_sample(tape.constant(Tensor::vector(logits.clone())), 1.0, &mut rng).unwrap();
            hits += usize::from(s.argmax[0] == 0);
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - expect).abs() < 0.01, "freq {freq} vs {expect}");
    }
}

#[test]
fn propagate_and_dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = random(&mut rng, &[4, 3]);
    let w = random(&mut rng, &[5]);
    let (src, dst) = (vec![0, 1, 2, 3, 1], vec![1, 0, 3, 2, 2]);
    let fd = check(
        |_, v| v[0].propagate(&src, &dst, Some(v[1]))?.relu().sum(),
        &[h, w.clone()],
        1e-6,
    )
    .unwrap();
    assert!(fd.max_rel_err < 1e-6, "{fd:?}");

    let pairs = vec![(0, 1), (1, 2), (0, 3), (2, 3), (1, 3)];
    let target = random(&mut rng, &[4, 4]);
    let fd = check(
        |tape, v| {
            let a = v[0].to_dense_symmetric(&pairs, 4)?;
            a.mul(tape.constant(target.clone()))?.sum()
        },
        &[w],
        1e-6,
    )
    .unwrap();
    assert!(fd.max_rel_err < 1e-6, "{fd:?}");
}

#[test]
fn params_round_trip_and_reject_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    store.add_glorot("a.w", 3, 2, &mut rng).unwrap();
    store.add_zeros("a.b", &[2]).unwrap();
    assert!(store.add_zeros("a.b", &[2]).is_err());
    let back = ParamStore::from_json(&store.to_json().unwrap()).unwrap();
    assert_eq!(back, {
        let mut s = store.clone();
        s.zero_grad();
        s
    });
    let bad = store.to_json().unwrap().replace("\"version\":1", "\"version\":99");
    assert!(matches!(ParamStore::from_json(&bad), Err(Error::Compatibility(_))));
}
