mod common;

use std::sync::{Arc, Mutex};

use common::values;
use mugan_core::data::synthetic::{generate, memory_dataset, SyntheticConfig};
use mugan_core::losses::LossWeights;
use mugan_core::rng::derived_rng;
use mugan_core::training::{checkpoint_config, load_generator, DMetrics, GMetrics, StepRecord};
use mugan_core::{ArchConfig, Checkpoint, Dataset, TrainConfig, Trainer, VariantSpec};

fn config() -> TrainConfig {
    TrainConfig {
        arch: ArchConfig {
            image_size: 32,
            base_width: 8,
            depth: 5,
        },
        batch_size: 4,
        epochs: 2,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn dataset(n: usize) -> Dataset {
    let faces = generate(&SyntheticConfig::new(n, 2)).unwrap();
    memory_dataset(faces, config().preprocess()).unwrap().with_cache(true)
}

fn snapshot(store: &mugan_core::params::ParamStore) -> Vec<(String, Vec<f64>)> {
    store.all().map(|(n, v)| (n.to_string(), values(v.as_tensor()))).collect()
}

#[test]
fn step_metrics_are_named_and_finite() {
    let ds = dataset(24);
    let mut t = Trainer::new(config()).unwrap();
    let records: Vec<usize> = (0..4).collect();
    let rec = t.train_step(&ds, &records).unwrap();
    assert_eq!(DMetrics::NAMES, ["adv_d", "cls_d", "gp", "total_d"]);
    assert_eq!(GMetrics::NAMES, ["adv_g", "cls_g", "rec", "total_g"]);
    assert!(rec.d.values().iter().all(|v| v.is_finite()));
    assert!(rec.g.is_none());
    let d = rec.d;
    let w = LossWeights::default();
    let recombined = d.adv_d + w.lambda_cls_d * d.cls_d + w.lambda_gp * d.gp;
    assert!((recombined - d.total_d).abs() <= 1e-4 * d.total_d.abs().max(1.0));
    assert_eq!(rec.tsv_line().split('\t').count(), StepRecord::tsv_header().split('\t').count());
}

#[test]
fn critic_total_without_auxiliary_terms_is_adversarial() {
    let ds = dataset(24);
    let mut cfg = config();
    cfg.weights.lambda_cls_d = 0.0;
    cfg.weights.lambda_gp = 0.0;
    let mut t = Trainer::new(cfg).unwrap();
    let batch = ds.load_batch(&[0, 1, 2, 3], &mut derived_rng(0, "t", 0)).unwrap();
    let m = t.train_step_d(&batch, 0.002, &mut derived_rng(0, "t", 1)).unwrap();
    assert_eq!(m.gp, 0.0);
    assert_eq!(m.total_d, m.adv_d);
}

#[test]
fn each_update_touches_only_its_own_network() {
    let ds = dataset(24);
    let mut t = Trainer::new(config()).unwrap();
    let batch = ds.load_batch(&[0, 1, 2, 3], &mut derived_rng(0, "t", 0)).unwrap();
    let (g0, d0) = (snapshot(t.generator().params()), snapshot(t.discriminator().params()));
    t.train_step_g(&batch, 0.002).unwrap();
    assert_eq!(snapshot(t.discriminator().params()), d0);
    assert_ne!(snapshot(t.generator().params()), g0);
    let g1 = snapshot(t.generator().params());
    t.train_step_d(&batch, 0.002, &mut derived_rng(0, "t", 1)).unwrap();
    assert_eq!(snapshot(t.generator().params()), g1);
    assert_ne!(snapshot(t.discriminator().params()), d0);
}

#[test]
fn reconstruction_uses_source_labels() {
    let ds = dataset(24);
    let mut t = Trainer::new(config()).unwrap();
    let traces = Arc::new(Mutex::new(Vec::new()));
    let sink = traces.clone();
    t.set_generator_hook(move |trace| sink.lock().unwrap().push(trace.clone()));
    t.run_limited(&ds, Some(10)).unwrap();
    let traces = traces.lock().unwrap();
    assert_eq!(traces.len(), 2);
    for tr in traces.iter() {
        let rec = &t.history()[tr.step as usize];
        assert!(rec.g.is_some());
        let mut a = tr.rec_labels.clone();
        let mut b = tr.edit_labels.clone();
        a.sort();
        b.sort();
        // targets are a permutation of the sources
        assert_eq!(a, b);
    }
}

#[test]
fn five_critic_steps_per_generator_step() {
    let ds = dataset(440);
    let mut t = Trainer::new(config()).unwrap();
    t.run_limited(&ds, Some(100)).unwrap();
    assert_eq!(t.d_steps(), 100);
    assert_eq!(t.g_steps(), 20);
    let g_at: Vec<u64> = t.history().iter().filter(|r| r.g.is_some()).map(|r| r.step).collect();
    assert_eq!(g_at, (0..20).map(|k| 5 * k + 4).collect::<Vec<_>>());
}

#[test]
fn seeded_runs_repeat_exactly() {
    let ds = dataset(40);
    let mut a = Trainer::new(config()).unwrap();
    let mut b = Trainer::new(config()).unwrap();
    a.run_limited(&ds, Some(12)).unwrap();
    b.run_limited(&ds, Some(12)).unwrap();
    assert_eq!(a.history(), b.history());
    let mut other = config();
    other.seed += 1;
    let mut c = Trainer::new(other).unwrap();
    c.run_limited(&ds, Some(12)).unwrap();
    assert_ne!(a.history(), c.history());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let ds = dataset(40);
    let mut whole = Trainer::new(config()).unwrap();
    whole.run(&ds).unwrap();

    let mut first = Trainer::new(config()).unwrap();
    first.run_limited(&ds, Some(13)).unwrap();
    let bytes = first.checkpoint().unwrap().to_bytes().unwrap();
    drop(first);
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    let mut resumed = Trainer::from_checkpoint(config(), &ckpt).unwrap();
    assert_eq!(resumed.step(), 13);
    resumed.run(&ds).unwrap();

    assert_eq!(resumed.step(), whole.step());
    assert_eq!(snapshot(resumed.generator().params()), snapshot(whole.generator().params()));
    assert_eq!(snapshot(resumed.discriminator().params()), snapshot(whole.discriminator().params()));
}

#[test]
fn checkpoints_refuse_other_graphs() {
    let t = Trainer::new(config()).unwrap();
    let ckpt = t.checkpoint().unwrap();
    assert_eq!(checkpoint_config(&ckpt).unwrap(), config());
    let m0 = VariantSpec::parse("M0").unwrap();
    let m1 = VariantSpec::parse("M1").unwrap();
    assert!(load_generator(&ckpt, Some(&m0)).is_ok());
    assert!(matches!(load_generator(&ckpt, Some(&m1)), Err(mugan_core::Error::Config(_))));
    let mut wrong = config();
    wrong.variant = "M2".into();
    assert!(matches!(Trainer::from_checkpoint(wrong, &ckpt), Err(mugan_core::Error::Config(_))));
    let mut bigger = config();
    bigger.arch.base_width = 16;
    assert!(Trainer::from_checkpoint(bigger, &ckpt).is_err());
}

#[test]
fn runs_write_logs_samples_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(24);
    let mut cfg = config();
    cfg.epochs = 1;
    cfg.sample_every = 5;
    cfg.output_dir = Some(dir.path().to_path_buf());
    let mut t = Trainer::new(cfg).unwrap();
    let summaries = t.run(&ds).unwrap();
    assert_eq!(summaries.len(), 1);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + t.step() as usize);
    assert!(dir.path().join("epochs.tsv").is_file());
    assert!(dir.path().join("samples/step_00000005.png").is_file());
    let last = mugan_core::load_checkpoint(&dir.path().join("checkpoints/last.ckpt")).unwrap();
    let gen = load_generator(&last, None).unwrap();
    assert_eq!(snapshot(gen.params()), snapshot(t.generator().params()));
}
