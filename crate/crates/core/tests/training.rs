//! Training-loop behaviour on a tiny synthetic dataset.

mod common;

use agos::data::{split_dataset, synth_generate, Dataset};
use agos::model::{init_params, loss_value, Variant};
use agos::ssf::LossConfig;
use agos::train::{
    evaluate, load_checkpoint, mean_std, predict_dataset, repeated_runs, save_checkpoint, train, train_until,
    Metrics, TrainConfig, TrainState,
};

fn data(cfg: &TrainConfig) -> (Dataset, Dataset) {
    let d = synth_generate(&cfg.synth, cfg.synth_seed).unwrap().dataset;
    split_dataset(&d, 0.5, cfg.seed).unwrap()
}

#[test]
fn loss_decreases() {
    let mut cfg = common::tiny_config();
    cfg.epochs = 8;
    let (tr, _) = data(&cfg);
    let state = train::<f64>(&tr, &cfg, 0, None).unwrap();
    let first = state.history.first().unwrap().loss.total;
    let last = state.history.last().unwrap().loss.total;
    assert!(last < first, "{first} -> {last}");
    assert_eq!(state.history.len(), 8);
}

#[test]
fn training_is_deterministic() {
    let cfg = common::tiny_config();
    let (tr, _) = data(&cfg);
    let a = train::<f32>(&tr, &cfg, 3, None).unwrap();
    let b = train::<f32>(&tr, &cfg, 3, None).unwrap();
    assert_eq!(a, b);
    let c = train::<f32>(&tr, &cfg, 4, None).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn resume_matches_uninterrupted_training() {
    let mut cfg = common::tiny_config();
    cfg.epochs = 4;
    cfg.model.dropout = 0.2;
    let (tr, _) = data(&cfg);
    let straight = train::<f64>(&tr, &cfg, 9, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut half = TrainState::<f64>::init(&cfg, &tr, 9).unwrap();
    train_until(&mut half, &tr, &cfg, 9, 2, None).unwrap();
    save_checkpoint(dir.path(), &half, &cfg).unwrap();
    let (mut resumed, stored) = load_checkpoint::<f64>(dir.path()).unwrap();
    assert_eq!(resumed, half);
    assert_eq!(stored, cfg);
    train_until(&mut resumed, &tr, &cfg, 9, 4, None).unwrap();
    assert_eq!(resumed.params, straight.params);
    assert_eq!(resumed.adam, straight.adam);
}

#[test]
fn single_precision_checkpoint_loads_as_double() {
    let cfg = common::tiny_config();
    let (tr, te) = data(&cfg);
    let state = train::<f32>(&tr, &cfg, 0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &state, &cfg).unwrap();
    let (wide, _) = load_checkpoint::<f64>(dir.path()).unwrap();
    assert_eq!(wide.params, state.params.cast::<f64>());
    let a = evaluate(&state.params, &state.model, &te, 5).unwrap();
    let b = evaluate(&wide.params, &wide.model, &te, 5).unwrap();
    assert_eq!(a.total, b.total);
}

#[test]
fn alignment_weight_does_not_change_the_classification_term() {
    let cfg = common::tiny_config();
    let (tr, _) = data(&cfg);
    let model = cfg.model_for(1, tr.num_classes());
    let params = init_params::<f64>(&model, 1).unwrap();
    let idx: Vec<usize> = (0..8).collect();
    let (x, y) = tr.batch::<f64>(&idx).unwrap();
    let off = LossConfig { alpha: 0.0, ..cfg.loss };
    let on = LossConfig { alpha: 0.5, ..cfg.loss };
    let a = loss_value(&params, &model, &off, &x, &y).unwrap();
    let b = loss_value(&params, &model, &on, &x, &y).unwrap();
    assert_eq!(a.cls, b.cls);
    assert!(b.total > a.total);
}

#[test]
fn every_variant_trains() {
    let cfg = common::tiny_config();
    let (tr, te) = data(&cfg);
    for v in [
        Variant::BackboneOnly,
        Variant::MgpFused,
        Variant::MgpMbmir,
        Variant::MgpSsf,
        Variant::Full,
    ] {
        let mut c = cfg.clone();
        c.model.variant = v;
        let s = train::<f32>(&tr, &c, 0, None).unwrap();
        let m = evaluate(&s.params, &s.model, &te, 8).unwrap();
        assert!((0.0..=1.0).contains(&m.overall_accuracy), "{v:?}");
        assert!(s.history.iter().all(|r| r.loss.total.is_finite()));
    }
}

#[test]
fn grain_scores_follow_the_variant() {
    let cfg = common::tiny_config();
    let (tr, te) = data(&cfg);
    let s = train::<f64>(&tr, &cfg, 0, None).unwrap();
    let p = predict_dataset(&s.params, &s.model, &te, 4).unwrap();
    assert_eq!(p.grain_scores[0].len(), cfg.model.mgp.grains + 1);
    let mut c = cfg.clone();
    c.model.variant = Variant::BackboneOnly;
    let s = train::<f64>(&tr, &c, 0, None).unwrap();
    let p = predict_dataset(&s.params, &s.model, &te, 4).unwrap();
    assert!(p.grain_scores.iter().all(|g| g.is_empty()));
}

#[test]
fn class_mismatch_is_rejected() {
    let cfg = common::tiny_config();
    let (tr, te) = data(&cfg);
    let s = train::<f32>(&tr, &cfg, 0, None).unwrap();
    let keep: Vec<usize> = (0..te.len()).filter(|&i| te.labels[i] < 2).collect();
    let two = Dataset::new(
        te.classes[..2].to_vec(),
        keep.iter().map(|&i| te.images[i].clone()).collect(),
        keep.iter().map(|&i| te.labels[i]).collect(),
    )
    .unwrap();
    assert!(evaluate(&s.params, &s.model, &two, 4).is_err());
}

#[test]
fn constant_classifier_scores_the_class_prior() {
    let labels = [0, 0, 1, 1, 2, 2, 2, 2];
    let m = Metrics::from_predictions(&[2; 8], &labels, 3);
    assert_eq!(m.overall_accuracy, 0.5);
    assert_eq!(m.per_class_accuracy, vec![0.0, 0.0, 1.0]);
}

#[test]
fn repeated_runs_report_every_run() {
    let mut cfg = common::tiny_config();
    cfg.runs = 3;
    cfg.epochs = 1;
    let (tr, te) = data(&cfg);
    let s = repeated_runs(&tr, &te, &cfg).unwrap();
    assert_eq!(s.oa.len(), 3);
    let (m, sd) = mean_std(&s.oa);
    assert_eq!((s.mean, s.std), (m, sd));
    // identical runs have zero spread
    cfg.runs = 1;
    let one = repeated_runs(&tr, &te, &cfg).unwrap();
    assert_eq!(one.std, 0.0);
    assert_eq!(one.oa[0], s.oa[0]);
}
