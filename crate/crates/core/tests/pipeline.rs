use msdcanet::analysis::{fps_benchmark, noise_robustness, run_variant, NoiseSpec};
use msdcanet::data::{load_dataset, save_dataset, synth_split, Dataset};
use msdcanet::metrics::batch_evaluate;
use msdcanet::network::{self, build_msdcanet};
use msdcanet::trainer::{train, TrainConfig, BEST_CHECKPOINT, HISTORY_CSV};
use msdcanet::{Model, ModelConfig, Tensor, Variant};

fn tiny() -> ModelConfig {
    ModelConfig::msdcanet(Variant::Custom).with_channels([8, 8, 16, 16, 16])
}

fn data() -> (Dataset, Dataset) {
    synth_split(16, 8, 32, 4).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, seed: 2, ..TrainConfig::default() }
}

#[test]
fn loss_falls_over_first_epochs() {
    let (tr, val) = data();
    let mut m = build_msdcanet::<f32>(tiny(), 1).unwrap();
    let out = train(&mut m, &tr, &val, &cfg(5)).unwrap();
    let losses: Vec<f64> = out.history.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses[4] < losses[0], "{losses:?}");
    assert_eq!(out.history.steps, 5 * 4);
}

#[test]
fn best_checkpoint_reproduces_its_score() {
    let (tr, val) = data();
    let dir = tempfile::tempdir().unwrap();
    let c = TrainConfig { checkpoint_dir: Some(dir.path().to_path_buf()), ..cfg(3) };
    let mut m = build_msdcanet::<f32>(tiny(), 1).unwrap();
    let out = train(&mut m, &tr, &val, &c).unwrap();
    let loaded: Model<f32> = network::load(&dir.path().join(BEST_CHECKPOINT)).unwrap();
    assert_eq!(loaded.config, out.best_model.config);
    let report = batch_evaluate(&loaded, &val, c.threshold).unwrap();
    assert_eq!(report.aggregate.miou, out.best_miou);
    let csv = std::fs::read_to_string(dir.path().join(HISTORY_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn ablation_row_matches_plain_training() {
    let (tr, val) = data();
    let c = cfg(2);
    let row = run_variant::<f32>("tiny", &tiny(), 1, &tr, &val, &c).unwrap();
    let mut m = build_msdcanet::<f32>(tiny(), 1).unwrap();
    let out = train(&mut m, &tr, &val, &c).unwrap();
    let report = batch_evaluate(&out.best_model, &val, c.threshold).unwrap();
    assert_eq!(row.miou, report.aggregate.miou);
    assert_eq!(row.f1, report.aggregate.f1);
    assert_eq!(row.params, m.param_count().count);
    assert_eq!(row.best_epoch, out.best_epoch);
}

#[test]
fn robustness_is_seeded() {
    let (_, val) = data();
    let m = build_msdcanet::<f32>(tiny(), 1).unwrap();
    let specs: Vec<NoiseSpec> = ["none", "gaussian:0.3", "poisson:30"].iter().map(|s| s.parse().unwrap()).collect();
    let a = noise_robustness(&m, &val, &specs, 5, 0.5).unwrap();
    let b = noise_robustness(&m, &val, &specs, 5, 0.5).unwrap();
    assert_eq!(a, b);
    let c = noise_robustness(&m, &val, &specs, 6, 0.5).unwrap();
    assert_eq!(a.rows[0], c.rows[0], "no noise, no seed dependence");
    assert_ne!(a.rows[1], c.rows[1]);
    assert_eq!(a.to_csv().unwrap().lines().count(), 4);
}

#[test]
fn dataset_round_trip_through_png() {
    let (tr, _) = data();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&tr, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), tr.len());
    for (a, b) in tr.samples.iter().zip(&back.samples) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.mask, b.mask);
        let err = a.image.data().iter().zip(b.image.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(err <= 0.5 / 255.0 + 1e-6, "{err}");
    }
}

#[test]
fn fps_is_consistent() {
    let m = build_msdcanet::<f32>(tiny(), 1).unwrap();
    let r = fps_benchmark(&m, &[2, 1, 32, 32], 10, 1).unwrap();
    assert!(r.fps > 0.0 && r.fps.is_finite());
    assert!((r.fps * r.mean_ms - 1000.0).abs() < 1e-6);
    assert_eq!((r.batch, r.iterations, r.comparable), (2, 10, false));
    assert!(fps_benchmark(&m, &[1, 1, 32, 32], 9, 0).is_err());
}

#[test]
fn f64_model_matches_f32() {
    let x32 = Tensor::<f32>::create(&[1, 1, 32, 32], msdcanet::Init::Uniform { bound: 1.0, seed: 9 }).unwrap();
    let x64: Tensor<f64> = x32.cast();
    let m32 = build_msdcanet::<f32>(tiny(), 3).unwrap();
    let m64 = build_msdcanet::<f64>(tiny(), 3).unwrap();
    let (y32, y64) = (m32.predict(&x32).unwrap(), m64.predict(&x64).unwrap());
    let err = y32.data().iter().zip(y64.data()).map(|(a, b)| (*a as f64 - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.msdc");
    network::save(&m64, &p).unwrap();
    let back: Model<f64> = network::load(&p).unwrap();
    assert_eq!(back.predict(&x64).unwrap(), y64);
}
