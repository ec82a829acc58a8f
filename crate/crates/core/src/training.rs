//! Two-stage adversarial training on crops of a single painting.
//!
//! Each step draws one augmented pair, runs stage 1, attention with a fresh
//! reference set and the enhancer once, updates both discriminators on the
//! detached fakes, then updates the generator side against the updated
//! discriminators. Randomness comes from ChaCha8 streams derived from
//! `(seed, purpose, index)`, so a fixed seed gives bit-identical runs.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gradient_of, Graph, Var};
use crate::bank::{sample_ordered_refs, Rect, ReferenceBank};
use crate::canvas::{block_color_mask, extract_sketch};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, Tap};
use crate::imageio::{rgb_to_tensor, tensor_to_rgb};
use crate::losses::{self, LossWeights};
use crate::networks::{is_discriminator_param, is_generator_param, ModelBundle, ModelConfig};
use crate::ops::{self, ResizeMode};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weights: LossWeights,
    pub patches_per_epoch: usize,
    pub max_epochs: usize,
    /// Caps the total step count across epochs.
    pub max_steps: Option<usize>,
    pub stage1_res: usize,
    pub stage2_res: usize,
    pub seed: u64,
    pub n_refs_per_category: usize,
    /// Write `ckpt_<epoch>.nply` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub early_stop: bool,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    /// Extra pixels around each sampled window, consumed by the random crop.
    pub crop_margin: usize,
    /// Cell size of the block-colour mask derived from the painting.
    pub mask_block: usize,
    /// Probability that a pair's mask channels are zeroed.
    pub mask_dropout: f64,
    /// Widths of the networks; `bank_k`, `stage1_res`,
    /// `n_refs_per_category` and `init_seed` are overwritten from the bank
    /// and this config.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_g: 0.0005,
            lr_d: 0.002,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weights: LossWeights::default(),
            patches_per_epoch: 64,
            max_epochs: 50,
            max_steps: None,
            stage1_res: 32,
            stage2_res: 64,
            seed: 0,
            n_refs_per_category: 1,
            checkpoint_every: 10,
            early_stop: true,
            plateau_window: 10,
            plateau_tolerance: 0.01,
            crop_margin: 8,
            mask_block: 8,
            mask_dropout: 0.5,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage2_res != 2 * self.stage1_res {
            return Err(Error::arg(format!(
                "stage2_res {} must be twice stage1_res {}",
                self.stage2_res, self.stage1_res
            )));
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return Err(Error::arg("learning rates must be positive"));
        }
        if self.patches_per_epoch == 0 || self.n_refs_per_category == 0 {
            return Err(Error::arg("patches_per_epoch and n_refs_per_category must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.mask_dropout) {
            return Err(Error::arg("mask_dropout must lie in [0, 1]"));
        }
        self.weights.validate()?;
        self.adam(self.lr_g).validate()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// The architecture config actually trained for `bank`.
    pub fn model_config(&self, bank: &ReferenceBank) -> ModelConfig {
        ModelConfig {
            bank_k: bank.k,
            stage1_res: self.stage1_res,
            n_refs_per_category: self.n_refs_per_category,
            init_seed: self.seed,
            ..self.model.clone()
        }
    }
}

const STREAM_EPOCH: u64 = 1;
const STREAM_AUGMENT: u64 = 2;
const STREAM_REFS: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th draw of a given purpose.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(purpose.rotate_left(32) ^ index))
}

/// Stage-1 input `[1, 4, h, w]` and the painting `[1, 3, 2h, 2w]` it should
/// become.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair<T> {
    pub sketch: Tensor<T>,
    pub painting: Tensor<T>,
    /// Window in painting coordinates.
    pub rect: Rect,
}

impl<T: Scalar> TrainingPair<T> {
    pub fn new(sketch: Tensor<T>, painting: Tensor<T>, rect: Rect) -> Result<Self> {
        let (_, c, h, w) = sketch.dims4()?;
        let (_, pc, ph, pw) = painting.dims4()?;
        if c != 4 || pc != 3 || ph != 2 * h || pw != 2 * w {
            return Err(Error::dim(format!(
                "pair needs sketch [1,4,h,w] and painting [1,3,2h,2w], got {:?} and {:?}",
                sketch.shape(),
                painting.shape()
            )));
        }
        Ok(TrainingPair { sketch, painting, rect })
    }

    /// The stage-1 target: the painting halved.
    pub fn painting_half(&self) -> Result<Tensor<T>> {
        let s = self.sketch.shape();
        ops::resize(&self.painting, s[2], s[3], ResizeMode::Bilinear)
    }
}

/// A painting and the half-resolution 4-channel canvas derived from it.
#[derive(Clone, Debug)]
pub struct TrainingSource<T> {
    pub painting: Tensor<T>,
    pub canvas: Tensor<T>,
}

impl<T: Scalar> TrainingSource<T> {
    /// Sketch and block-colour mask of the halved painting.
    pub fn from_painting(painting: &RgbImage, mask_block: usize) -> Result<Self> {
        let (w, h) = (painting.width() as usize, painting.height() as usize);
        if w % 2 != 0 || h % 2 != 0 {
            return Err(Error::dim(format!("training painting {w}x{h} must have even sides")));
        }
        let p: Tensor<T> = rgb_to_tensor(painting);
        let half = ops::resize(&p, h / 2, w / 2, ResizeMode::Bilinear)?;
        let half_img = tensor_to_rgb(&half)?;
        let sketch: Tensor<T> = extract_sketch(&half_img)?;
        let mask: Tensor<T> = block_color_mask(&half_img, mask_block)?;
        Ok(TrainingSource {
            painting: p,
            canvas: ops::concat(&[&sketch, &mask], 1)?,
        })
    }

    pub fn pair_at(&self, y: usize, x: usize, size: usize) -> Result<TrainingPair<T>> {
        if !y.is_multiple_of(2) || !x.is_multiple_of(2) || !size.is_multiple_of(2) {
            return Err(Error::arg("pair windows must sit on even coordinates"));
        }
        TrainingPair::new(
            self.canvas.crop(y / 2, x / 2, size / 2, size / 2)?,
            self.painting.crop(y, x, size, size)?,
            Rect::new(x, y, size, size),
        )
    }

    /// The whole source as one pair (the painting must be square).
    pub fn full_pair(&self) -> Result<TrainingPair<T>> {
        let (_, _, h, w) = self.painting.dims4()?;
        if h != w {
            return Err(Error::dim("full_pair needs a square painting"));
        }
        self.pair_at(0, 0, h)
    }
}

/// `cfg.patches_per_epoch` windows of side `stage2_res + crop_margin`
/// (clamped to the painting), at uniformly drawn even positions.
pub fn sample_epoch<T: Scalar>(
    source: &TrainingSource<T>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<TrainingPair<T>>> {
    let (_, _, h, w) = source.painting.dims4()?;
    if h < cfg.stage2_res || w < cfg.stage2_res {
        return Err(Error::dim(format!(
            "painting {w}x{h} is smaller than stage2_res {}",
            cfg.stage2_res
        )));
    }
    let win = ((cfg.stage2_res + cfg.crop_margin).min(h).min(w)) & !1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_EPOCH, epoch as u64));
    (0..cfg.patches_per_epoch)
        .map(|_| {
            let y = 2 * rng.random_range(0..=(h - win) / 2);
            let x = 2 * rng.random_range(0..=(w - win) / 2);
            source.pair_at(y, x, win)
        })
        .collect()
}

/// Random transform applied by [`augment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    /// Even crop offset inside the pair's painting.
    pub y: usize,
    pub x: usize,
    pub flip: bool,
    pub gain: [f64; 3],
    pub bias: [f64; 3],
    pub drop_mask: bool,
}

pub const GAIN_RANGE: (f64, f64) = (0.9, 1.1);
pub const BIAS_RANGE: (f64, f64) = (-0.05, 0.05);

impl Augmentation {
    pub fn sample(painting_side: (usize, usize), crop: usize, mask_dropout: f64, seed: u64) -> Result<Self> {
        let (h, w) = painting_side;
        if h < crop || w < crop || !crop.is_multiple_of(2) {
            return Err(Error::dim(format!("cannot crop {crop} from {w}x{h}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = 2 * rng.random_range(0..=(h - crop) / 2);
        let x = 2 * rng.random_range(0..=(w - crop) / 2);
        let flip = rng.random_bool(0.5);
        let gain = std::array::from_fn(|_| rng.random_range(GAIN_RANGE.0..=GAIN_RANGE.1));
        let bias = std::array::from_fn(|_| rng.random_range(BIAS_RANGE.0..=BIAS_RANGE.1));
        let drop_mask = rng.random_bool(mask_dropout);
        Ok(Augmentation {
            y,
            x,
            flip,
            gain,
            bias,
            drop_mask,
        })
    }

    /// Crop to `crop` (painting side), optional flip of both images, colour
    /// jitter on the painting only, optional mask removal.
    pub fn apply<T: Scalar>(&self, pair: &TrainingPair<T>, crop: usize) -> Result<TrainingPair<T>> {
        let mut p = pair.painting.crop(self.y, self.x, crop, crop)?;
        let mut s = pair.sketch.crop(self.y / 2, self.x / 2, crop / 2, crop / 2)?;
        if self.flip {
            p = p.flip_horizontal()?;
            s = s.flip_horizontal()?;
        }
        let plane = crop * crop;
        for (i, v) in p.data_mut().iter_mut().enumerate() {
            let c = i / plane;
            *v = T::lit((v.as_f64() * self.gain[c] + self.bias[c]).clamp(0.0, 1.0));
        }
        if self.drop_mask {
            let splane = plane / 4;
            s.data_mut()[splane..].iter_mut().for_each(|v| *v = T::zero());
        }
        let rect = Rect::new(pair.rect.x + self.x, pair.rect.y + self.y, crop, crop);
        TrainingPair::new(s, p, rect)
    }
}

pub fn augment<T: Scalar>(pair: &TrainingPair<T>, cfg: &TrainConfig, seed: u64) -> Result<TrainingPair<T>> {
    let s = pair.painting.shape();
    Augmentation::sample((s[2], s[3]), cfg.stage2_res, cfg.mask_dropout, seed)?.apply(pair, cfg.stage2_res)
}

/// One row of `losses.csv`. `l_cx` and `l_l1` sum both stages; `total` is
/// the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub l_d1: f64,
    pub l_g1: f64,
    pub l_d2: f64,
    pub l_g2: f64,
    pub l_cx: f64,
    pub l_l1: f64,
    pub total: f64,
}

pub const LOSS_CSV_HEADER: &str = "step,l_d1,l_g1,l_d2,l_g2,l_cx,l_l1,total";

impl LossRow {
    fn values(&self) -> [f64; 7] {
        [
            self.l_d1, self.l_g1, self.l_d2, self.l_g2, self.l_cx, self.l_l1, self.total,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn csv_line(&self) -> String {
        let mut s = self.step.to_string();
        for v in self.values() {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s
    }
}

pub fn losses_csv(rows: &[LossRow]) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Trainer state: model, both optimizers, and the fixed perceptual extractor.
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub model: ModelBundle<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub extractor: FeatureExtractor<T>,
    pub step: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: TrainConfig, bank: &ReferenceBank) -> Result<Self> {
        cfg.validate()?;
        let mut model = ModelBundle::new(cfg.model_config(bank))?;
        model.bank_ref = Some(bank_fingerprint(bank)?);
        let gen: Vec<_> = model
            .store
            .iter()
            .filter(|(_, p)| is_generator_param(&p.name))
            .map(|(id, _)| id)
            .collect();
        let disc: Vec<_> = model
            .store
            .iter()
            .filter(|(_, p)| is_discriminator_param(&p.name))
            .map(|(id, _)| id)
            .collect();
        let opt_g = Adam::new(&model.store, gen, cfg.adam(cfg.lr_g))?;
        let opt_d = Adam::new(&model.store, disc, cfg.adam(cfg.lr_d))?;
        Ok(Trainer {
            cfg,
            model,
            opt_g,
            opt_d,
            extractor: FeatureExtractor::new(),
            step: 0,
        })
    }

    fn perceptual(&self, g: &mut Graph<T>, image: Var) -> Result<Var> {
        self.extractor.embed_graph(g, image, Tap::Tap3)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, pair: &TrainingPair<T>, bank: &ReferenceBank) -> Result<LossRow> {
        let step = self.step;
        let s = pair.sketch.shape();
        let refs = sample_ordered_refs::<T>(
            bank,
            self.cfg.n_refs_per_category,
            s[2],
            s[3],
            derive_seed(self.cfg.seed, STREAM_REFS, step as u64),
        )?;
        let target_lo = pair.painting_half()?;

        let mut g = Graph::new();
        let p = self.model.store.bind(&mut g, is_generator_param);
        let x = g.constant(pair.sketch.clone());
        let ref_vars: Vec<Var> = refs.refs.iter().map(|r| g.constant(r.clone())).collect();
        let gen = self.model.generate_graph(&mut g, &p, x, &ref_vars)?;

        // discriminators on detached fakes
        let (l_d1, l_d2) = {
            let mut dg = Graph::new();
            let dp = self.model.store.bind(&mut dg, is_discriminator_param);
            let fake_lo = dg.constant(g.value(gen.rgb_lo).clone());
            let fake_hi = dg.constant(g.value(gen.rgb_hi).clone());
            let real_lo = dg.constant(target_lo.clone());
            let real_hi = dg.constant(pair.painting.clone());
            let r1 = self.model.d1.forward(&mut dg, &dp, real_lo)?;
            let f1 = self.model.d1.forward(&mut dg, &dp, fake_lo)?;
            let r2 = self.model.d2.forward(&mut dg, &dp, real_hi)?;
            let f2 = self.model.d2.forward(&mut dg, &dp, fake_hi)?;
            let l1 = losses::gan_d(&mut dg, r1, f1)?;
            let l2 = losses::gan_d(&mut dg, r2, f2)?;
            let total = dg.add(l1, l2)?;
            let vars: Vec<Var> = self.opt_d.ids.iter().map(|&id| dp.var(id)).collect();
            let grads = gradient_of(&dg, total, &vars)?;
            let (a, b) = (dg.value(l1).item()?.as_f64(), dg.value(l2).item()?.as_f64());
            if a.is_finite() && b.is_finite() {
                self.opt_d.step(&mut self.model.store, &grads)?;
            }
            (a, b)
        };

        // generator against the updated discriminators
        let pd = p.rebind(&mut g, &self.model.store, is_discriminator_param);
        let d1 = self.model.d1.forward(&mut g, &pd, gen.rgb_lo)?;
        let d2 = self.model.d2.forward(&mut g, &pd, gen.rgb_hi)?;
        let l_g1 = losses::gan_g(&mut g, d1);
        let l_g2 = losses::gan_g(&mut g, d2);
        let real_lo = g.constant(target_lo);
        let real_hi = g.constant(pair.painting.clone());
        let feat_lo = self.perceptual(&mut g, gen.rgb_lo)?;
        let feat_real_lo = self.perceptual(&mut g, real_lo)?;
        let feat_hi = self.perceptual(&mut g, gen.rgb_hi)?;
        let feat_real_hi = self.perceptual(&mut g, real_hi)?;
        let cx1 = losses::contextual(&mut g, feat_lo, feat_real_lo)?;
        let cx2 = losses::contextual(&mut g, feat_hi, feat_real_hi)?;
        let l1a = losses::l1(&mut g, gen.rgb_lo, real_lo)?;
        let l1b = losses::l1(&mut g, gen.rgb_hi, real_hi)?;
        let gan = g.add(l_g1, l_g2)?;
        let cx = g.add(cx1, cx2)?;
        let l1 = g.add(l1a, l1b)?;
        let total = losses::objective(&mut g, gan, cx, l1, &self.cfg.weights)?;

        let val = |v: Var| -> Result<f64> { Ok(g.value(v).item()?.as_f64()) };
        let row = LossRow {
            step,
            l_d1,
            l_g1: val(l_g1)?,
            l_d2,
            l_g2: val(l_g2)?,
            l_cx: val(cx)?,
            l_l1: val(l1)?,
            total: val(total)?,
        };
        if !row.is_finite() {
            return Err(Error::NonFinite(format!("losses at step {step}: {row:?}")));
        }
        let vars: Vec<Var> = self.opt_g.ids.iter().map(|&id| p.var(id)).collect();
        let grads = gradient_of(&g, total, &vars)?;
        self.opt_g.step(&mut self.model.store, &grads)?;
        self.step += 1;
        Ok(row)
    }
}

/// Content hash identifying a bank file.
pub fn bank_fingerprint(bank: &ReferenceBank) -> Result<String> {
    let bytes = bank.to_bytes()?;
    // FNV-1a, 64 bit
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: ModelBundle<T>,
    pub losses: Vec<LossRow>,
    pub epochs: usize,
    pub steps: usize,
    pub stopped_early: bool,
    pub checkpoints: Vec<PathBuf>,
}

/// `true` when the moving average over the last `window` epochs moved by
/// less than `tol` (relative) compared with `window` epochs earlier.
pub fn plateaued(epoch_losses: &[f64], window: usize, tol: f64) -> bool {
    let n = epoch_losses.len();
    if window == 0 || n < 2 * window {
        return false;
    }
    let ma = |end: usize| epoch_losses[end - window..end].iter().sum::<f64>() / window as f64;
    let (now, before) = (ma(n), ma(n - window));
    (now - before).abs() < tol * before.abs()
}

/// Builds the training source from `painting`, then trains against `bank`.
/// With `out_dir`, writes `losses.csv` and periodic `ckpt_<epoch>.nply`;
/// a non-finite loss writes `ckpt_diverged.nply` and returns
/// [`Error::NonFinite`].
pub fn train<T: Scalar>(
    painting: &RgbImage,
    bank: &ReferenceBank,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    let source = TrainingSource::<T>::from_painting(painting, cfg.mask_block)?;
    let mut trainer = Trainer::new(cfg.clone(), bank)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut checkpoints = Vec::new();
    let mut stopped_early = false;
    let mut epochs = 0;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    'epochs: for epoch in 0..cfg.max_epochs {
        let pairs = sample_epoch(&source, cfg, epoch)?;
        let mut sum = 0.0;
        let mut count = 0;
        for pair in &pairs {
            if trainer.step >= max_steps {
                break;
            }
            let seed = derive_seed(cfg.seed, STREAM_AUGMENT, trainer.step as u64);
            let aug = augment(pair, cfg, seed)?;
            let row = match trainer.train_step(&aug, bank) {
                Ok(r) => r,
                Err(e @ Error::NonFinite(_)) => {
                    if let Some(dir) = out_dir {
                        let path = dir.join("ckpt_diverged.nply");
                        trainer.model.save(&path)?;
                        fs::write(dir.join("losses.csv"), losses_csv(&rows))?;
                        warn!("training diverged; diagnostic checkpoint at {}", path.display());
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            sum += row.total;
            count += 1;
            rows.push(row);
        }
        if count == 0 {
            break;
        }
        epochs = epoch + 1;
        epoch_losses.push(sum / count as f64);
        info!("epoch {epoch}: mean generator loss {:.5}", sum / count as f64);
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epochs % cfg.checkpoint_every == 0 {
                let path = dir.join(format!("ckpt_{epochs}.nply"));
                trainer.model.save(&path)?;
                checkpoints.push(path);
            }
        }
        if cfg.early_stop && plateaued(&epoch_losses, cfg.plateau_window, cfg.plateau_tolerance) {
            info!("generator loss plateaued after {epochs} epochs");
            stopped_early = true;
            break 'epochs;
        }
        if trainer.step >= max_steps {
            break;
        }
    }
    if let Some(dir) = out_dir {
        fs::write(dir.join("losses.csv"), losses_csv(&rows))?;
        let last = dir.join(format!("ckpt_{epochs}.nply"));
        if !checkpoints.contains(&last) {
            trainer.model.save(&last)?;
            checkpoints.push(last);
        }
    }
    Ok(TrainOutcome {
        steps: trainer.step,
        model: trainer.model,
        losses: rows,
        epochs,
        stopped_early,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_rule() {
        let flat = vec![1.0; 20];
        assert!(plateaued(&flat, 10, 0.01));
        assert!(!plateaued(&flat[..19], 10, 0.01));
        let falling: Vec<f64> = (0..20).map(|i| 2.0 - 0.05 * i as f64).collect();
        assert!(!plateaued(&falling, 10, 0.01));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, STREAM_EPOCH, 0), derive_seed(1, STREAM_EPOCH, 1));
        assert_ne!(derive_seed(1, STREAM_EPOCH, 0), derive_seed(1, STREAM_AUGMENT, 0));
        assert_eq!(derive_seed(5, 2, 9), derive_seed(5, 2, 9));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.stage2_res = 48;
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let r = LossRow {
            step: 3,
            l_d1: 1.0,
            l_g1: 0.5,
            l_d2: 1.25,
            l_g2: 0.75,
            l_cx: 2.0,
            l_l1: 0.125,
            total: 4.0,
        };
        assert_eq!(
            losses_csv(&[r]),
            format!("{LOSS_CSV_HEADER}\n3,1,0.5,1.25,0.75,2,0.125,4\n")
        );
    }
}
