use graphpae::corruption::{sample_plan, PathMode};
use graphpae::eval::{
    accuracy, embed_nodes, mean_std, probe_split, random_split, readout, rmse, roc_auc,
    LinearProbe, Metric, ProbeConfig, ProbeKind, Readout, Targets,
};
use graphpae::synth::{make_sbm, SbmConfig};
use graphpae::trainer::{load_model, pretrain, PreparedGraph, RunConfig, TrainData, Trainer};
use graphpae::{Error, Graph};
use graphpae_tensor::{AdamConfig, Checkpoint, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(d: usize, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::new(d);
    cfg.epochs = epochs;
    cfg.k = 6;
    cfg.encoder.hidden = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.rbf_count = 16;
    cfg.adam = AdamConfig::with_lr(1e-2);
    cfg
}

fn sbm() -> Graph {
    let mut cfg = SbmConfig::new(vec![15, 15], 0.4, 0.05, 1);
    cfg.feature_dim = 4;
    make_sbm(&cfg).unwrap()
}

#[test]
fn checkpoint_bytes_round_trip() {
    let t = pretrain(TrainData::Node(&sbm()), small_cfg(4, 2)).unwrap();
    let ck = t.checkpoint();
    let mut a = Vec::new();
    ck.write_to(&mut a).unwrap();
    let back = Checkpoint::read_from(&mut a.as_slice()).unwrap();
    assert_eq!(back, ck);
    let mut b = Vec::new();
    back.write_to(&mut b).unwrap();
    assert_eq!(a, b);
    let (_, store) = load_model(&back).unwrap();
    for (id, name, v) in t.store.iter() {
        assert_eq!(store.get(id).data(), v.data(), "{name}");
    }
}

#[test]
fn corrupt_checkpoint_rejected() {
    let t = pretrain(TrainData::Node(&sbm()), small_cfg(4, 1)).unwrap();
    let mut bytes = Vec::new();
    t.checkpoint().write_to(&mut bytes).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[1] ^= 0xff;
    assert!(Checkpoint::read_from(&mut bad_magic.as_slice()).is_err());
    let truncated = &bytes[..bytes.len() / 2];
    assert!(Checkpoint::read_from(&mut &truncated[..]).is_err());
}

#[test]
fn zero_mask_ratio_has_zero_feature_loss() {
    let mut cfg = small_cfg(4, 2);
    cfg.mask_ratio = 0.0;
    let t = pretrain(TrainData::Node(&sbm()), cfg).unwrap();
    for r in &t.log.records {
        assert_eq!(r.loss_feat, 0.0);
        assert!((r.loss_total - 0.1 * r.loss_pos).abs() <= 1e-15);
    }
}

#[test]
fn nan_parameter_aborts_first_epoch() {
    let g = sbm();
    let cfg = small_cfg(4, 3);
    let data = vec![PreparedGraph::new(&g, cfg.k, cfg.seed).unwrap()];
    let mut t = Trainer::new(cfg).unwrap();
    let id = t.store.id("enc.lift.w").unwrap();
    t.store.get_mut(id).data_mut()[0] = f64::NAN;
    match t.train_epoch(&data) {
        Err(Error::NonFiniteLoss { epoch, .. }) => assert_eq!(epoch, 1),
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn masked_nodes_are_uniform_over_draws() {
    let (n, ratio, draws) = (40, 0.25, 4000);
    let mut counts = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..draws {
        let plan = sample_plan(n, ratio, PathMode::Feature, 0.0, &mut rng).unwrap();
        assert_eq!(plan.masked().len(), 10);
        for &i in plan.masked() {
            counts[i] += 1;
        }
    }
    let p = 10.0 / n as f64;
    let mean = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 4.0 * sd, "node {i}: {c} vs {mean}±{sd}");
    }
}

#[test]
fn probe_leaves_encoder_untouched_and_is_deterministic() {
    let g = sbm();
    let t = pretrain(TrainData::Node(&g), small_cfg(4, 2)).unwrap();
    let before = Checkpoint::from_store(&t.store);
    let prepared = PreparedGraph::new(&g, 6, 0).unwrap();
    let h = embed_nodes(&t.model, &t.store, &prepared).unwrap();
    let y = Targets::classes_from_column(g.labels().unwrap()).unwrap();
    let split = random_split(g.num_nodes(), 0.6, 0.2, 4).unwrap();
    let a = probe_split(&h, &y, &split, ProbeConfig::default()).unwrap();
    let b = probe_split(&h, &y, &split, ProbeConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(Checkpoint::from_store(&t.store), before);
    assert_eq!(embed_nodes(&t.model, &t.store, &prepared).unwrap(), h);
}

#[test]
fn label_permutation_gives_chance_accuracy() {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::from_vec(n, 3, (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = Targets::Classes((0..n).map(|_| rng.random_range(0..2)).collect());
    let split = random_split(n, 0.6, 0.2, 0).unwrap();
    let acc = probe_split(&x, &y, &split, ProbeConfig::default()).unwrap();
    assert!((acc - 0.5).abs() <= 0.05, "{acc}");
}

#[test]
fn constant_prediction_rmse_is_population_std() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..4.0)).collect();
    let (m, s) = mean_std(&y);
    assert!((rmse(&vec![m; y.len()], &y).unwrap() - s).abs() <= 1e-12);
}

#[test]
fn linear_probe_recovers_affine_targets() {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::from_vec(n, 2, (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y: Vec<f64> = (0..n).map(|i| 3.0 * x.get(i, 0) - x.get(i, 1) + 0.5).collect();
    let cfg = ProbeConfig {
        kind: ProbeKind::Linear,
        metric: Metric::Rmse,
        lr: 0.05,
        epochs: 2000,
        patience: 2000,
        ..ProbeConfig::default()
    };
    let t = Targets::Values(Tensor::column(y));
    let p = LinearProbe::fit(&x, &t, None, cfg).unwrap();
    assert!(p.evaluate(&x, &t).unwrap() < 1e-3);
}

#[test]
fn random_scores_auc_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let l: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
    let auc = roc_auc(&s, &l).unwrap();
    assert!((auc - 0.5).abs() <= 0.02, "{auc}");
}

#[test]
fn auc_known_values() {
    assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    // Tied scores count half.
    assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::Metric(_))));
    assert_eq!(accuracy(&[0, 1, 1, 2], &[0, 1, 2, 2]).unwrap(), 0.75);
}

#[test]
fn mismatched_probe_metric_rejected() {
    let cfg = ProbeConfig {
        metric: Metric::Rmse,
        ..ProbeConfig::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Argument(_))));
}

proptest! {
    #[test]
    fn readout_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let h = Tensor::from_rows(&rows).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let hp = h.gather_rows(&perm);
        for kind in [Readout::Mean, Readout::Sum, Readout::Max] {
            let a = readout(&h, kind).unwrap();
            let b = readout(&hp, kind).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn auc_of_negated_scores_complements(
        pairs in prop::collection::vec((-1.0f64..1.0, any::<bool>()), 2..60),
    ) {
        let (s, l): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let sum = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }
}
