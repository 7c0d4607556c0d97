use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{make_synthetic, SyntheticKind};
use crate::partition::{partition_dataset, PartitionAlgo};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 4,
        layers: 2,
        hidden_dim: 8,
        projection_dim: 8,
        probe_folds: 0,
        finetune_epochs: 3,
        ..TrainConfig::default()
    }
}

fn tiny_data() -> (Dataset, Vec<Partition>) {
    let ds = make_synthetic(SyntheticKind::MotifVsRandom, 16, 10, 3).unwrap();
    let parts = partition_dataset(&ds, PartitionAlgo::default(), 0);
    (ds, parts)
}

fn store_with(values: &[(&str, Tensor)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (n, v) in values {
        s.add(*n, v.clone()).unwrap();
    }
    s
}

#[test]
fn adam_ignores_zero_gradients() {
    let mut store = store_with(&[("w", Tensor::vector(vec![1.0, -2.0]))]);
    let mut state = AdamState::new(&store);
    for _ in 0..3 {
        adam_step(&mut store, &mut state, &AdamConfig::default()).unwrap();
    }
    assert_eq!(store.value(store.id("w").unwrap()).data(), &[1.0, -2.0]);
    assert_eq!(state.step, 3);
}

#[test]
fn adam_first_step_closed_form() {
    let g = [0.3, -4.0, 1e-3];
    let mut store = store_with(&[("w", Tensor::vector(vec![0.0; 3]))]);
    let tape = Tape::new();
    let w = tape.param(&store, store.id("w").unwrap());
    let c = tape.constant(Tensor::vector(g.to_vec()));
    tape.backward(w.mul(c).unwrap().sum().unwrap()).unwrap();
    store.accumulate_grads(&tape);
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(&store);
    adam_step(&mut store, &mut state, &cfg).unwrap();
    // m̂ = g and v̂ = g² after bias correction, so Δ = −lr·g / (|g| + ε).
    for (i, gi) in g.iter().enumerate() {
        let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
        let got = store.value(store.id("w").unwrap()).data()[i];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }
}

#[test]
fn adam_state_round_trips_and_checks_layout() {
    let store = store_with(&[("a", Tensor::zeros(&[2, 3])), ("b", Tensor::zeros(&[3]))]);
    let mut state = AdamState::new(&store);
    state.step = 7;
    state.m[0].data_mut()[4] = 0.25;
    let back: AdamState = serde_json::from_str(&serde_json::to_string(&state).unwrap()).unwrap();
    assert_eq!(back, state);

    let mut other = store_with(&[("a", Tensor::zeros(&[2, 3]))]);
    assert!(matches!(adam_step(&mut other, &mut state.clone(), &AdamConfig::default()), Err(Error::Compatibility(_))));
}

#[test]
fn config_defaults_round_trip_through_toml() {
    let cfg = TrainConfig::default();
    assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(TrainConfig::from_toml("").unwrap(), cfg);
    assert_eq!((cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps), (1e-3, 0.9, 0.999, 1e-8));
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.tau_ntxent), (100, 32, 0.2));
    assert_eq!((cfg.lambda_cl, cfg.lambda_sim, cfg.lambda_cls), (1.0, 0.5, 1.0));
}

#[test]
fn config_errors_name_the_key() {
    let key = |text: &str| match TrainConfig::from_toml(text) {
        Err(Error::Config { key, .. }) => key,
        other => panic!("expected a config error, got {other:?}"),
    };
    assert_eq!(key("lrr = 0.1\n"), "lrr");
    assert_eq!(key("epochs = 3\nlr = \"fast\"\n"), "lr");
    assert_eq!(key("lr = -1.0\n"), "lr");
    assert_eq!(key("batch_size = 1\n"), "batch_size");
    assert_eq!(key("beta2 = 1.0\n"), "beta2");
    assert_eq!(key("partition = \"spectral\"\n"), "partition");
    assert_eq!(key("label_fraction = 0.0\n"), "label_fraction");
    assert_eq!(key("regime = \"supervised\"\n"), "regime");
    let ok = TrainConfig::from_toml("regime = \"semi-supervised\"\npartition = \"gn:first-split\"\n").unwrap();
    assert_eq!(ok.regime, Regime::SemiSupervised);
}

#[test]
fn gumbel_temperature_anneals_to_floor() {
    let cfg = TrainConfig {
        tau_gumbel: 1.0,
        gumbel_anneal: 0.5,
        tau_gumbel_min: 0.2,
        ..TrainConfig::default()
    };
    let taus: Vec<f64> = (0..4).map(|e| cfg.tau_gumbel_at(e)).collect();
    assert_eq!(taus, vec![1.0, 0.5, 0.25, 0.2]);
    assert_eq!(TrainConfig::default().tau_gumbel_at(50), 1.0);
}

#[test]
fn config_hash_tracks_content() {
    let a = TrainConfig::default();
    let b = TrainConfig { seed: 1, ..a.clone() };
    assert_eq!(a.hash(), a.clone().hash());
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn stratified_split_keeps_class_ratios() {
    let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 4 == 0)).collect();
    let (lab, rest) = stratified_split(&labels, 0.2, 3).unwrap();
    assert_eq!(lab.len(), 20);
    assert_eq!(lab.iter().filter(|&&i| labels[i] == 1).count(), 5);
    assert_eq!(lab.len() + rest.len(), 100);
    assert!(lab.iter().all(|i| rest.binary_search(i).is_err()));

    let (all, none) = stratified_split(&labels, 1.0, 3).unwrap();
    assert_eq!((all.len(), none.len()), (100, 0));
    assert!(matches!(stratified_split(&[0, 0, 0, 0, 0, 0, 1], 0.2, 0), Err(Error::Stratification(_))));
    assert!(stratified_split(&labels, 0.0, 0).is_err());
}

#[test]
fn logistic_objective_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::matrix(7, 3, (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let y = [0, 2, 1, 1, 0, 2, 2];
    let theta: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut grad = vec![0.0; 12];
    probe::objective(&x, &y, 3, 0.1, &theta, &mut grad);
    let mut scratch = vec![0.0; 12];
    for i in 0..12 {
        let (mut p, mut m) = (theta.clone(), theta.clone());
        p[i] += 1e-6;
        m[i] -= 1e-6;
        let num = (probe::objective(&x, &y, 3, 0.1, &p, &mut scratch) - probe::objective(&x, &y, 3, 0.1, &m, &mut scratch)) / 2e-6;
        assert!((num - grad[i]).abs() < 1e-7, "{i}: {num} vs {}", grad[i]);
    }
}

#[test]
fn probe_separates_separable_embeddings_and_not_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 120;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let sep = Tensor::matrix(
        n,
        4,
        labels
            .iter()
            .flat_map(|&y| (0..4).map(move |j| if j == y { 3.0 } else { 0.0 }))
            .zip(std::iter::repeat_with(|| 0.0))
            .map(|(v, _)| v)
            .collect::<Vec<_>>()
            .into_iter()
            .map(|v| v + rng.gen_range(-0.5..0.5))
            .collect(),
    )
    .unwrap();
    let good = linear_probe_eval(&sep, &labels, 10, 1e-3, 0).unwrap();
    assert!(good.mean > 0.99, "{good:?}");
    assert_eq!(good.scores.len(), 10);

    let noise = Tensor::matrix(n, 4, (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let bad = linear_probe_eval(&noise, &labels, 10, 1e-3, 0).unwrap();
    assert!(bad.mean < 0.55, "{bad:?}");
}

#[test]
fn probe_rejects_single_class_and_bad_folds() {
    let x = Tensor::zeros(&[6, 2]);
    assert!(matches!(linear_probe_eval(&x, &[1; 6], 3, 1e-3, 0), Err(Error::Stratification(_))));
    assert!(linear_probe_eval(&x, &[0, 1, 0, 1, 0, 1], 1, 1e-3, 0).is_err());
    // One member of class 1 leaves a training fold without it.
    assert!(matches!(linear_probe_eval(&x, &[0, 0, 0, 0, 0, 1], 3, 1e-3, 0), Err(Error::Stratification(_))));
}

#[test]
fn zero_epoch_run_returns_initial_parameters() {
    let (ds, parts) = tiny_data();
    let cfg = TrainConfig { epochs: 0, ..tiny_config() };
    let out = train_unsupervised(&ds, &parts, &cfg).unwrap();
    let fresh = Model::new(&cfg, ds.feature_dim(), ds.num_classes(), false).unwrap();
    assert_eq!(out.model.store, fresh.store);
    assert!(out.report.epochs.is_empty());
    assert_eq!(out.optimizer.step, 0);
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let (ds, parts) = tiny_data();
    let cfg = tiny_config();
    let a = train_unsupervised(&ds, &parts, &cfg).unwrap();
    let b = train_unsupervised(&ds, &parts, &cfg).unwrap();
    assert_eq!(a.report.report_hash, b.report.report_hash);
    assert_eq!(a.model.store, b.model.store);
    assert_eq!(a.report.report_hash, a.report.compute_hash());
    let c = train_unsupervised(&ds, &parts, &TrainConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(a.report.report_hash, c.report.report_hash);
}

#[test]
fn every_head_receives_gradient_each_epoch() {
    let ds = make_synthetic(SyntheticKind::MotifVsRandom, 24, 12, 1).unwrap();
    let parts = partition_dataset(&ds, PartitionAlgo::default(), 0);
    let out = train_unsupervised(&ds, &parts, &tiny_config()).unwrap();
    assert_eq!(out.report.heads_active_every_epoch(), Head::ALL.to_vec(), "{:?}", out.report.epochs);
    assert!(out.model.store.all_finite());
}

#[test]
fn huge_learning_rate_is_reported_as_divergence() {
    let (ds, parts) = tiny_data();
    let cfg = TrainConfig {
        lr: 1e300,
        epochs: 20,
        ..tiny_config()
    };
    assert!(matches!(train_unsupervised(&ds, &parts, &cfg), Err(Error::Divergence(_))));
}

#[test]
fn training_rejects_mismatched_partitions() {
    let (ds, parts) = tiny_data();
    assert!(matches!(train_unsupervised(&ds, &parts[1..], &tiny_config()), Err(Error::Contract(_))));
}

#[test]
fn checkpoint_round_trip_preserves_the_model() {
    let (ds, parts) = tiny_data();
    let out = train_unsupervised(&ds, &parts, &tiny_config()).unwrap();
    let ck = Checkpoint::from_outcome(&out);
    let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
    assert_eq!(back, ck);
    let model = back.model().unwrap();
    assert_eq!(model.embed(ds.graphs()).unwrap(), out.model.embed(ds.graphs()).unwrap());

    let mut tampered = ck.clone();
    tampered.config.seed += 1;
    assert!(matches!(Checkpoint::from_json(&tampered.to_json().unwrap()), Err(Error::Compatibility(_))));
    assert!(matches!(Checkpoint::from_json("{\"format\":\"x\"}"), Err(Error::Compatibility(_))));
}

#[test]
fn shared_encoder_checkpoint_round_trip() {
    let (ds, parts) = tiny_data();
    let cfg = TrainConfig {
        share_encoder: true,
        ..tiny_config()
    };
    let out = train_unsupervised(&ds, &parts, &cfg).unwrap();
    assert!(out.model.store.id("gen1.enc.gin0.w1").is_none());
    let model = Checkpoint::from_outcome(&out).model().unwrap();
    assert_eq!(model.store.to_json().unwrap(), out.model.store.to_json().unwrap());
}

#[test]
fn report_serialises_and_exports_metrics() {
    let (ds, parts) = tiny_data();
    let out = train_unsupervised(&ds, &parts, &tiny_config()).unwrap();
    let r = &out.report;
    assert_eq!(RunReport::from_json(&r.to_json().unwrap()).unwrap(), *r);
    let csv = r.metrics_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + r.epochs.len());
    assert!(lines[0].starts_with("epoch,batches,tau_gumbel,loss_cl"));
    let cols = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == cols));
}

#[test]
fn semi_supervised_with_all_labels_trains_and_evaluates() {
    let (ds, parts) = tiny_data();
    let cfg = TrainConfig {
        regime: Regime::SemiSupervised,
        ..tiny_config()
    };
    let out = train_semisupervised(&ds, &parts, 1.0, &cfg).unwrap();
    assert!(out.report.epochs.iter().all(|e| e.loss.cls.is_some()));
    assert_eq!(out.report.finetune_loss.len(), cfg.finetune_epochs);
    let acc = out.report.eval.unwrap().mean;
    assert!((0.0..=1.0).contains(&acc));

    let base = supervised_baseline(&ds, 0.5, &cfg).unwrap();
    assert!(base.report.epochs.is_empty());
    assert!(matches!(train_semisupervised(&ds, &parts, 0.01, &cfg), Err(Error::Stratification(_))));
}

#[test]
fn contrastive_loss_falls_on_motif_data() {
    let ds = make_synthetic(SyntheticKind::MotifVsRandom, 40, 12, 2).unwrap();
    let parts = partition_dataset(&ds, PartitionAlgo::default(), 0);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        ..tiny_config()
    };
    let out = train_unsupervised(&ds, &parts, &cfg).unwrap();
    let first = out.report.epochs[0].loss.cl;
    let last = out.report.epochs.last().unwrap().loss.cl;
    assert!(last < first, "{first} -> {last}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn folds_partition_and_stratify(seed in 0u64..1000, n in 20usize..80, k in 2usize..8) {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % 3).collect();
        let folds = stratified_folds(&labels, k, seed);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for c in 0..3 {
            let counts: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn adam_keeps_parameters_finite(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = store_with(&[("w", Tensor::vector((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()))]);
        let mut state = AdamState::new(&store);
        for _ in 0..10 {
            store.zero_grad();
            let tape = Tape::new();
            let w = tape.param(&store, store.id("w").unwrap());
            let c = tape.constant(Tensor::vector((0..5).map(|_| rng.gen_range(-1e6..1e6)).collect()));
            tape.backward(w.mul(c).unwrap().sum().unwrap()).unwrap();
            store.accumulate_grads(&tape);
            adam_step(&mut store, &mut state, &AdamConfig::default()).unwrap();
            prop_assert!(store.all_finite());
        }
    }
}
