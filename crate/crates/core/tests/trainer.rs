mod common;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use latentvid::latent::singular_values;
use latentvid::losses::LossConfig;
use latentvid::synthdata::{default_matrix_dataset, Geometry};
use latentvid::trainer::{
    adam_step, decode_checkpoint, encode_checkpoint, fit, load_checkpoint, save_checkpoint, sgd_momentum_step,
    sgd_momentum_update, AdamConfig, AdamMoments, Checkpoint, TrainConfig, Trainer, TrainingSet,
};
use latentvid::{Error, FrameShape, LatentDictionary, ModelConfig, ModelParams, Tensor};

fn geometry() -> Geometry {
    Geometry {
        frames: 6,
        channels: 3,
        height: 8,
        width: 8,
    }
}

fn model_config() -> ModelConfig {
    let g = geometry();
    ModelConfig {
        static_dim: 4,
        transient_dim: 3,
        frames: g.frames,
        frame: FrameShape::new(g.channels, g.height, g.width),
        base_channels: 4,
        hidden: 8,
        seed: 1,
    }
}

fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        warmup_epochs: 1,
        seed: 2,
        ..TrainConfig::default()
    }
}

fn dataset() -> TrainingSet {
    let (manifest, clips) = default_matrix_dataset(2, 2, &[], geometry(), 0).unwrap();
    TrainingSet::new(clips, manifest.training_labels()).unwrap()
}

fn hash_tensors<'a>(ts: impl Iterator<Item = &'a Tensor>) -> u64 {
    let mut h = DefaultHasher::new();
    for t in ts {
        t.shape().hash(&mut h);
        for v in t.data() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn gen_hash(m: &ModelParams) -> u64 {
    hash_tensors(m.generator.iter().map(|(_, t)| t))
}

fn rnn_hash(m: &ModelParams) -> u64 {
    hash_tensors(m.rnn.iter().map(|(_, t)| t))
}

fn dict_hash(d: &LatentDictionary) -> u64 {
    let statics: Vec<Tensor> = d
        .statics()
        .map(|(_, v)| Tensor::new(&[v.len()], v.to_vec()).unwrap())
        .collect();
    hash_tensors(statics.iter().chain(d.transients().map(|(_, t)| t)))
}

#[test]
fn adam_matches_scalar_recurrence() {
    let cfg = AdamConfig::default();
    let mut p = Tensor::scalar(0.5f32);
    let mut state = AdamMoments::zeros(&[1]);
    let g = Tensor::scalar(1.0f32);
    let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.5f64);
    for t in 1..=3 {
        adam_step(&mut p, &g, &mut state, 0.1, &cfg).unwrap();
        m = 0.9 * m + 0.1;
        v = 0.999 * v + 0.001;
        let mhat = m / (1.0 - 0.9f64.powi(t));
        let vhat = v / (1.0 - 0.999f64.powi(t));
        x -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.item() as f64 - x).abs() < 1e-6, "step {t}: {} vs {x}", p.item());
    }
    assert_eq!(state.step, 3);
}

#[test]
fn adam_first_step_is_signed_lr() {
    let mut p = Tensor::from_f64_slice(&[3], &[0.0, 0.0, 0.0]).unwrap();
    let g = Tensor::from_f64_slice(&[3], &[3.0, -0.01, 250.0]).unwrap();
    let mut s = AdamMoments::zeros(&[3]);
    adam_step(&mut p, &g, &mut s, 0.01, &AdamConfig::default()).unwrap();
    for (x, sign) in p.data().iter().zip([-1.0, 1.0, -1.0]) {
        assert!((x - sign * 0.01).abs() < 1e-6);
    }
}

#[test]
fn adam_zero_gradient_and_non_finite() {
    let mut p = Tensor::from_f64_slice(&[2], &[0.3, -0.7]).unwrap();
    let before = p.clone();
    let mut s = AdamMoments::zeros(&[2]);
    for _ in 0..3 {
        adam_step(&mut p, &Tensor::zeros(&[2]), &mut s, 0.1, &AdamConfig::default()).unwrap();
    }
    assert_eq!(p, before);
    let bad = Tensor::from_f64_slice(&[2], &[f64::NAN, 0.0]).unwrap();
    assert!(matches!(
        adam_step(&mut p, &bad, &mut s, 0.1, &AdamConfig::default()),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn momentum_sgd_examples() {
    let g = Tensor::from_f64_slice(&[2], &[0.5, -0.25]).unwrap();
    let start = Tensor::from_f64_slice(&[2], &[0.1, 0.2]).unwrap();

    let mut x = start.clone();
    let mut v = Tensor::zeros(&[2]);
    sgd_momentum_update(&mut x, &g, &mut v, 0.1, 0.9).unwrap();
    let d1: Vec<f64> = x.data().iter().zip(start.data()).map(|(a, b)| (a - b) as f64).collect();
    let x1 = x.clone();
    sgd_momentum_update(&mut x, &g, &mut v, 0.1, 0.9).unwrap();
    let d2: Vec<f64> = x.data().iter().zip(x1.data()).map(|(a, b)| (a - b) as f64).collect();
    for i in 0..2 {
        let gi = g.data()[i] as f64;
        assert!((d1[i] + 0.1 * gi).abs() < 1e-7);
        assert!((d2[i] + 0.1 * 1.9 * gi).abs() < 1e-7);
    }

    let mut x = Tensor::from_f64_slice(&[2], &[0.9, 0.0]).unwrap();
    let mut v = Tensor::zeros(&[2]);
    let push = Tensor::from_f64_slice(&[2], &[-2.0, 0.0]).unwrap();
    sgd_momentum_step(&mut x, &push, &mut v, 0.1, 0.0).unwrap();
    assert!((x.data()[0] - 1.0).abs() < 1e-6 && x.data()[1] == 0.0);

    let mut x = start.clone();
    let mut v = Tensor::zeros(&[2]);
    sgd_momentum_step(&mut x, &Tensor::zeros(&[2]), &mut v, 0.1, 0.9).unwrap();
    assert_eq!(x, start);
}

#[test]
fn zero_epochs_rejected() {
    assert!(train_config(0).validate(&model_config()).is_err());
    let data = dataset();
    assert!(Trainer::new(&model_config(), &train_config(0), &data).is_err());
}

#[test]
fn frozen_latents_and_rnn_stay_bit_identical() {
    let data = dataset();
    let cfg = TrainConfig {
        lr_latent: 0.0,
        lr_rnn: 0.0,
        ..train_config(2)
    };
    let mut t = Trainer::new(&model_config(), &cfg, &data).unwrap();
    let (d0, r0, g0) = (
        dict_hash(&t.state.dict),
        rnn_hash(&t.state.model),
        gen_hash(&t.state.model),
    );
    t.run(|_, _| Ok(())).unwrap();
    assert_eq!(dict_hash(&t.state.dict), d0);
    assert_eq!(rnn_hash(&t.state.model), r0);
    assert_ne!(gen_hash(&t.state.model), g0);
}

#[test]
fn frozen_generator_stays_bit_identical() {
    let data = dataset();
    let cfg = TrainConfig {
        lr_gen: 0.0,
        ..train_config(2)
    };
    let mut t = Trainer::new(&model_config(), &cfg, &data).unwrap();
    let (d0, r0, g0) = (
        dict_hash(&t.state.dict),
        rnn_hash(&t.state.model),
        gen_hash(&t.state.model),
    );
    t.run(|_, _| Ok(())).unwrap();
    assert_eq!(gen_hash(&t.state.model), g0);
    assert_ne!(dict_hash(&t.state.dict), d0);
    assert_ne!(rnn_hash(&t.state.model), r0);
}

#[test]
fn warm_up_epochs_touch_only_the_generator() {
    let data = dataset();
    let cfg = TrainConfig {
        warmup_epochs: 2,
        ..train_config(1)
    };
    let mut t = Trainer::new(&model_config(), &cfg, &data).unwrap();
    for _ in 0..2 {
        let (d0, r0, g0) = (
            dict_hash(&t.state.dict),
            rnn_hash(&t.state.model),
            gen_hash(&t.state.model),
        );
        t.train_epoch().unwrap();
        assert_eq!(dict_hash(&t.state.dict), d0);
        assert_eq!(rnn_hash(&t.state.model), r0);
        assert_ne!(gen_hash(&t.state.model), g0);
    }
}

#[test]
fn constraints_hold_after_every_epoch() {
    let data = dataset();
    let cfg = TrainConfig {
        rank: Some(2),
        lr_latent: 0.5,
        ..train_config(4)
    };
    let mut t = Trainer::new(&model_config(), &cfg, &data).unwrap();
    t.run(|_, ckpt| {
        assert!(ckpt.dict.in_unit_ball());
        if ckpt.epoch > ckpt.config.warmup_epochs {
            for (name, z) in ckpt.dict.transients() {
                let s = singular_values(z).unwrap();
                assert!(s[2] / s[0] < 1e-6, "{name}: {s:?}");
            }
        }
        Ok(())
    })
    .unwrap();
}

#[test]
fn two_frame_clip_overfits() {
    let (manifest, clips) = default_matrix_dataset(
        1,
        1,
        &[],
        Geometry {
            frames: 2,
            ..Geometry::default()
        },
        0,
    )
    .unwrap();
    let data = TrainingSet::new(clips, manifest.training_labels()).unwrap();
    let model = ModelConfig {
        frames: 2,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 195,
        warmup_epochs: 5,
        loss: LossConfig {
            lambda_triplet: 0.0,
            window: 1,
            ..LossConfig::default()
        },
        ..TrainConfig::default()
    };
    let ckpt = fit(&model, &cfg, &data).unwrap();
    assert_eq!(ckpt.history.len(), 200);
    let first = ckpt.history[0].loss.rec;
    let last = ckpt.history[199].loss.rec;
    assert!(last <= 0.1 * first, "rec {first} -> {last}");
}

#[test]
fn triplet_term_needs_a_negative() {
    let model = ModelConfig {
        frames: 2,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        loss: LossConfig {
            window: 1,
            ..LossConfig::default()
        },
        ..TrainConfig::default()
    };
    assert!(cfg.validate(&model).is_err());
}

#[test]
fn training_is_deterministic() {
    let data = dataset();
    let a = fit(&model_config(), &train_config(3), &data).unwrap();
    let b = fit(&model_config(), &train_config(3), &data).unwrap();
    assert_eq!(encode_checkpoint(&a).unwrap(), encode_checkpoint(&b).unwrap());
    let c = fit(
        &model_config(),
        &TrainConfig {
            seed: 3,
            ..train_config(3)
        },
        &data,
    )
    .unwrap();
    assert_ne!(encode_checkpoint(&a).unwrap(), encode_checkpoint(&c).unwrap());
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let data = dataset();
    let cfg = TrainConfig {
        rank: Some(2),
        ..train_config(4)
    };
    let straight = fit(&model_config(), &cfg, &data).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.nvck");
    let mut t = Trainer::new(&model_config(), &cfg, &data).unwrap();
    t.train_epoch().unwrap();
    t.train_epoch().unwrap();
    save_checkpoint(&t.state, &path).unwrap();
    let loaded = load_checkpoint(&path, Some(&model_config())).unwrap();
    assert_eq!(loaded, t.state);

    let mut resumed = Trainer::resume(loaded, &data).unwrap();
    resumed.run(|_, _| Ok(())).unwrap();
    let resumed = resumed.into_checkpoint();
    assert_eq!(resumed.epoch, 5);
    assert_eq!(
        encode_checkpoint(&resumed).unwrap(),
        encode_checkpoint(&straight).unwrap()
    );
}

#[test]
fn truncated_checkpoint_reports_offset() {
    let data = dataset();
    let ckpt = Checkpoint::initial(&model_config(), &train_config(1), &data).unwrap();
    let bytes = encode_checkpoint(&ckpt).unwrap();
    assert_eq!(decode_checkpoint(&bytes).unwrap(), ckpt);
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        match decode_checkpoint(&bytes[..cut]) {
            Err(Error::Format { offset, .. }) => assert!(offset <= cut as u64, "cut {cut}, offset {offset}"),
            other => panic!("cut {cut}: expected a format error, got {:?}", other.map(|c| c.epoch)),
        }
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_checkpoint(&bad).is_err());
    let mut bad = bytes;
    bad[4] = 9;
    assert!(decode_checkpoint(&bad).is_err());
}

#[test]
fn mismatched_model_config_rejected() {
    let data = dataset();
    let ckpt = Checkpoint::initial(&model_config(), &train_config(1), &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.nvck");
    save_checkpoint(&ckpt, &path).unwrap();
    let other = ModelConfig {
        hidden: 9,
        ..model_config()
    };
    assert!(load_checkpoint(&path, Some(&other)).is_err());
}

#[test]
fn divergence_returns_last_good_state() {
    let data = dataset();
    let cfg = TrainConfig {
        lr_gen: 1e30,
        lr_latent: 1e30,
        lr_rnn: 1e30,
        warmup_epochs: 0,
        ..train_config(20)
    };
    let mut t = Trainer::new(&model_config(), &cfg, &data).unwrap();
    match t.run(|_, _| Ok(())) {
        Err(Error::Diverged { epoch, last_good, .. }) => {
            assert_eq!(last_good.epoch, epoch);
            assert!(last_good.model.all_finite());
            assert_eq!(*last_good, t.state);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}
