use nesr_core::model::ModelConfig;
use nesr_core::synth::{generate_scene, SpectralScene};
use nesr_core::train::*;
use nesr_core::NesrError;

fn scenes() -> Vec<SpectralScene> {
    (0..3).map(|s| generate_scene(40 + s, 12, 12, 4).unwrap()).collect()
}

fn model() -> ModelConfig {
    ModelConfig {
        encoder_channels: 4,
        embed_channels: 4,
        ..ModelConfig::default()
    }
}

fn config(iters: u64) -> TrainConfig {
    TrainConfig {
        lr0: 1e-3,
        max_iters: iters,
        crop: 8,
        batch: 2,
        band_sampling: BandSampling::UniformRandom { min: 3, max: 9 },
        sample_voxels: Some(48),
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn schedule_defaults() {
    let c = TrainConfig::default();
    assert_eq!(lr_at(0, &c), 1e-4);
    assert_eq!(lr_at(499, &c), 1e-4);
    assert_eq!(lr_at(500, &c), 5e-5);
    assert_eq!(lr_at(1999, &c), 1.25e-5);
    let p = TrainConfig::full_scale();
    assert_eq!((p.decay_every, p.max_iters), (20_000, 300_000));
    assert_eq!(lr_at(19_999, &p), 1e-4);
    assert_eq!(lr_at(20_000, &p), 5e-5);
    assert_eq!(lr_at(40_000, &p), 2.5e-5);
}

#[test]
fn config_json_rejects_unknown_keys() {
    let c: TrainConfig = serde_json::from_str(r#"{"lr0": 0.001, "band_sampling": {"uniform_random": {"min": 7, "max": 31}}}"#).unwrap();
    assert_eq!(c.lr0, 1e-3);
    assert_eq!(c.band_sampling, BandSampling::UniformRandom { min: 7, max: 31 });
    assert!(serde_json::from_str::<TrainConfig>(r#"{"learning_rate": 1}"#).is_err());
    assert!(serde_json::from_str::<ModelConfig>(r#"{"heads": 4}"#).is_err());
}

#[test]
fn invalid_setups() {
    assert!(matches!(Trainer::new(model(), config(1), vec![]), Err(NesrError::Usage(_))));
    let big_crop = TrainConfig { crop: 16, ..config(1) };
    assert!(matches!(Trainer::new(model(), big_crop, scenes()), Err(NesrError::Config(_))));
    let spectral = TrainConfig { input: InputMode::Spectral(16), ..config(1) };
    assert!(matches!(Trainer::new(model(), spectral, scenes()), Err(NesrError::Config(_))));
    let no_decay = TrainConfig { decay_every: 0, ..config(1) };
    assert!(Trainer::new(model(), no_decay, scenes()).is_err());
}

#[test]
fn training_reduces_the_loss() {
    let ckpt = train(scenes(), model(), config(120)).unwrap();
    assert_eq!(ckpt.iteration, 120);
    assert_eq!(ckpt.losses.len(), 120);
    let head: f64 = ckpt.losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = ckpt.losses[100..].iter().sum::<f64>() / 20.0;
    assert!(tail < head, "{head} -> {tail}");
    assert!(ckpt.weights.all_finite());
}

#[test]
fn runs_are_bitwise_repeatable() {
    let a = train(scenes(), model(), config(6)).unwrap();
    let b = train(scenes(), model(), config(6)).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let other = train(scenes(), model(), TrainConfig { seed: 6, ..config(6) }).unwrap();
    assert_ne!(a.losses, other.losses);
}

#[test]
fn checkpoint_round_trip() {
    let ckpt = train(scenes(), model(), config(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub").join("model.nsrc");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_bytes().unwrap(), ckpt.to_bytes().unwrap());
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes.truncate(bytes.len() - 5);
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(NesrError::Format { .. })));
}

#[test]
fn resume_continues_the_same_trajectory() {
    let straight = train(scenes(), model(), config(8)).unwrap();

    let mut first = Trainer::new(model(), config(4), scenes()).unwrap();
    first.run(|_| Ok(())).unwrap();
    let saved = Checkpoint::from_bytes(&first.checkpoint().to_bytes().unwrap()).unwrap();
    let mut second = Trainer::resume(saved, scenes()).unwrap();
    second.extend_to(8);
    second.run(|_| Ok(())).unwrap();
    let resumed = second.checkpoint();

    assert_eq!(resumed.losses, straight.losses);
    assert_eq!(resumed.weights, straight.weights);
    assert_eq!(resumed.rng, straight.rng);
}

#[test]
fn periodic_checkpoints() {
    let mut seen = Vec::new();
    let cfg = TrainConfig { checkpoint_every: 2, ..config(5) };
    let mut trainer = Trainer::new(model(), cfg, scenes()).unwrap();
    trainer
        .run(|c| {
            seen.push(c.iteration);
            Ok(())
        })
        .unwrap();
    assert_eq!(seen, [2, 4]);
    assert!(trainer.is_done());
}

#[test]
fn spectral_input_training() {
    let m = ModelConfig { in_channels: 16, ..model() };
    let cfg = TrainConfig {
        input: InputMode::Spectral(16),
        band_sampling: BandSampling::UniformRandom { min: 17, max: 31 },
        ..config(2)
    };
    let ckpt = train(scenes(), m, cfg).unwrap();
    assert_eq!(ckpt.weights.encoder.stem.kernels.shape()[1], 16);
}

#[test]
fn divergence_is_reported() {
    let cfg = TrainConfig { lr0: 1e300, ..config(4) };
    let mut trainer = Trainer::new(model(), cfg, scenes()).unwrap();
    let err = (0..4).map(|_| trainer.step()).find_map(|r| r.err());
    match err {
        Some(NesrError::NonFiniteLoss { seed, .. }) => assert_eq!(seed, 5),
        Some(NesrError::Tensor(_)) => {}
        other => panic!("{other:?}"),
    }
}
