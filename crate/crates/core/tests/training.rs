use polyptych_core::bank::{build_bank, decompose_multires, ReferenceBank};
use polyptych_core::losses::LossWeights;
use polyptych_core::networks::ModelConfig;
use polyptych_core::synth::checker_texture;
use polyptych_core::training::{
    augment, sample_epoch, train, Augmentation, TrainConfig, TrainingSource, BIAS_RANGE, GAIN_RANGE, LOSS_CSV_HEADER,
};
use polyptych_core::{Error, FeatureExtractor32, Ratio};

fn painting() -> image::RgbImage {
    checker_texture(32, 32, 4, 2, 8, 1)
}

fn bank() -> ReferenceBank {
    let d = decompose_multires(&painting(), &[8, 16], Ratio::new(1, 2)).unwrap();
    build_bank(d.patches, &FeatureExtractor32::new(), 2, 1).unwrap()
}

fn tiny(steps: usize) -> TrainConfig {
    TrainConfig {
        stage1_res: 16,
        stage2_res: 32,
        patches_per_epoch: 3,
        max_epochs: 100,
        max_steps: Some(steps),
        checkpoint_every: 2,
        early_stop: false,
        model: ModelConfig {
            encoder_widths: [4, 4, 8],
            residual_blocks: 1,
            feature_channels: 4,
            enhancer_width: 4,
            disc_widths: [4, 4, 4],
            c_prime: 4,
            reduction: 2,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_runs() {
    let (b, cfg) = (bank(), tiny(7));
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = train::<f32>(&painting(), &b, &cfg, Some(d1.path())).unwrap();
    let c = train::<f32>(&painting(), &b, &cfg, Some(d2.path())).unwrap();
    assert_eq!(a.losses, c.losses);
    assert_eq!(a.steps, 7);
    assert_eq!(a.epochs, 3);
    let names: Vec<_> = a
        .checkpoints
        .iter()
        .map(|p| p.file_name().unwrap().to_owned())
        .collect();
    assert_eq!(names, ["ckpt_2.nply", "ckpt_3.nply"]);
    for (p, q) in a.checkpoints.iter().zip(&c.checkpoints) {
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
    let csv = std::fs::read_to_string(d1.path().join("losses.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(LOSS_CSV_HEADER));
    assert_eq!(csv.lines().count(), 8);
    assert!(a.losses.iter().all(|r| r.is_finite()));
    assert_eq!(
        a.model.bank_ref,
        Some(polyptych_core::training::bank_fingerprint(&b).unwrap())
    );

    let other = train::<f32>(&painting(), &b, &TrainConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(other.losses, a.losses);
}

#[test]
fn adversarial_only_objective_is_its_projection() {
    let cfg = TrainConfig {
        weights: LossWeights {
            mu1: 0.3,
            mu2: 0.0,
            mu3: 0.0,
        },
        ..tiny(4)
    };
    let out = train::<f64>(&painting(), &bank(), &cfg, None).unwrap();
    for r in &out.losses {
        assert!((r.total - 0.3 * (r.l_g1 + r.l_g2)).abs() <= 1e-6, "{r:?}");
    }
}

#[test]
fn divergence_writes_diagnostic_checkpoint() {
    let cfg = TrainConfig {
        lr_g: 1e30,
        lr_d: 1e30,
        ..tiny(20)
    };
    let dir = tempfile::tempdir().unwrap();
    let res = train::<f32>(&painting(), &bank(), &cfg, Some(dir.path()));
    assert!(matches!(res, Err(Error::NonFinite(_))), "{res:?}");
    assert!(dir.path().join("ckpt_diverged.nply").exists());
}

#[test]
fn plateau_stops_training_early() {
    let cfg = TrainConfig {
        early_stop: true,
        plateau_window: 1,
        plateau_tolerance: 1e9,
        max_steps: None,
        ..tiny(0)
    };
    let out = train::<f32>(&painting(), &bank(), &cfg, None).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.epochs, 2);
    assert_eq!(out.steps, 6);
}

#[test]
fn epochs_sample_in_bounds_and_vary() {
    let src = TrainingSource::<f32>::from_painting(&checker_texture(48, 40, 4, 0, 0, 0), 8).unwrap();
    let cfg = TrainConfig {
        patches_per_epoch: 8,
        ..tiny(1)
    };
    let mut seen = Vec::new();
    for epoch in 0..3 {
        let pairs = sample_epoch(&src, &cfg, epoch).unwrap();
        assert_eq!(pairs.len(), 8);
        for p in &pairs {
            assert!(p.rect.fits_in(48, 40));
            assert_eq!(p.painting.shape(), &[1, 3, 40, 40]);
            assert_eq!((p.rect.x % 2, p.rect.y % 2), (0, 0));
        }
        let rects: Vec<_> = pairs.iter().map(|p| (p.rect.x, p.rect.y)).collect();
        assert_eq!(
            rects,
            sample_epoch(&src, &cfg, epoch)
                .unwrap()
                .iter()
                .map(|p| (p.rect.x, p.rect.y))
                .collect::<Vec<_>>()
        );
        seen.push(rects);
    }
    assert!(seen[0] != seen[1] || seen[1] != seen[2]);
    let small = TrainingSource::<f32>::from_painting(&checker_texture(24, 24, 4, 0, 0, 0), 8).unwrap();
    assert!(sample_epoch(&small, &cfg, 0).is_err());
}

#[test]
fn augmentation_ranges_and_geometry() {
    let (mut gmin, mut gmax, mut bmin, mut bmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let mut flips = 0;
    for seed in 0..1000 {
        let a = Augmentation::sample((40, 40), 32, 0.5, seed).unwrap();
        for c in 0..3 {
            gmin = gmin.min(a.gain[c]);
            gmax = gmax.max(a.gain[c]);
            bmin = bmin.min(a.bias[c]);
            bmax = bmax.max(a.bias[c]);
        }
        flips += a.flip as usize;
        assert!(a.x <= 8 && a.y <= 8 && a.x.is_multiple_of(2) && a.y.is_multiple_of(2));
    }
    assert!(gmin >= GAIN_RANGE.0 && gmax <= GAIN_RANGE.1 && gmin < 0.91 && gmax > 1.09);
    assert!(bmin >= BIAS_RANGE.0 && bmax <= BIAS_RANGE.1);
    assert!((400..600).contains(&flips));

    let src = TrainingSource::<f64>::from_painting(&checker_texture(32, 32, 4, 1, 6, 2), 4).unwrap();
    let pair = src.full_pair().unwrap();
    let flip = Augmentation {
        y: 0,
        x: 0,
        flip: true,
        gain: [1.0; 3],
        bias: [0.0; 3],
        drop_mask: false,
    };
    let twice = flip.apply(&flip.apply(&pair, 32).unwrap(), 32).unwrap();
    assert_eq!(twice.sketch, pair.sketch);
    assert_eq!(twice.painting, pair.painting);

    let jitter = Augmentation {
        flip: false,
        gain: [1.1, 0.9, 1.0],
        bias: [0.05, 0.0, -0.05],
        ..flip
    };
    let j = jitter.apply(&pair, 32).unwrap();
    assert_eq!(j.sketch, pair.sketch);
    assert_ne!(j.painting, pair.painting);

    let dropped = Augmentation {
        drop_mask: true,
        ..jitter
    }
    .apply(&pair, 32)
    .unwrap();
    assert_eq!(
        dropped.sketch.crop(0, 0, 16, 16).unwrap().data()[..256],
        pair.sketch.data()[..256]
    );
    assert!(dropped.sketch.data()[256..].iter().all(|&v| v == 0.0));

    let cfg = tiny(1);
    assert_eq!(augment(&pair, &cfg, 3).unwrap(), augment(&pair, &cfg, 3).unwrap());
    assert!(Augmentation::sample((30, 40), 32, 0.5, 0).is_err());
}
