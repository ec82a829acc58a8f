//! Stage-1 encoder-decoder generator, 2× enhancer, patch discriminators and
//! the [`ModelBundle`] that owns all of their parameters.
//!
//! Decoding upsamples with nearest-neighbour 2× followed by a 3×3 conv.
//! Every conv except the discriminator's is followed by GeLU; the
//! discriminator uses leaky ReLU (slope 0.2) and emits raw logits.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{CAConfig, CAParams, CAVars};
use crate::autodiff::{Graph, Var};
use crate::bank::RefSet;
use crate::codec::{write_f32s, write_header, Reader};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, ParamStore};
use crate::ops::ResizeMode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"NPLY";
pub const MODEL_VERSION: u16 = 1;

/// Input height and width of the stage-1 generator must be multiples of this.
pub const DIVISOR: usize = 8;

/// Smallest side the discriminators accept.
pub const MIN_DISC_SIDE: usize = 16;

const LEAK: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Sketch luminance plus a 3-channel colour mask.
    pub in_channels: usize,
    pub encoder_widths: [usize; 3],
    pub residual_blocks: usize,
    /// Width `C` of the stage-1 feature map handed to attention.
    pub feature_channels: usize,
    pub enhancer_width: usize,
    pub disc_widths: [usize; 3],
    pub c_prime: usize,
    pub reduction: usize,
    /// Category count of the bank the model attends to.
    pub bank_k: usize,
    pub n_refs_per_category: usize,
    pub stage1_res: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 4,
            encoder_widths: [32, 64, 128],
            residual_blocks: 2,
            feature_channels: 32,
            enhancer_width: 32,
            disc_widths: [32, 64, 128],
            c_prime: 16,
            reduction: 4,
            bank_k: 3,
            n_refs_per_category: 1,
            stage1_res: 32,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn n_refs(&self) -> usize {
        self.bank_k * self.n_refs_per_category
    }

    pub fn ca_config(&self) -> CAConfig {
        CAConfig {
            channels: self.feature_channels,
            ref_channels: 3,
            c_prime: self.c_prime,
            n_refs: self.n_refs(),
            reduction: self.reduction,
        }
    }
}

/// Enforces the generator's divisibility rule on an `[1, C, h, w]` shape.
pub fn check_divisible(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(DIVISOR) || !w.is_multiple_of(DIVISOR) {
        return Err(Error::dim(format!(
            "generator input {h}x{w} must have both sides divisible by {DIVISOR}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GeneratorStage1 {
    pub in_channels: usize,
    pub encoder: Vec<Conv2d>,
    pub residual: Vec<(Conv2d, Conv2d)>,
    pub decoder: Vec<Conv2d>,
    pub head: Conv2d,
}

impl GeneratorStage1 {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut encoder = Vec::new();
        let mut c = cfg.in_channels;
        for (i, &w) in cfg.encoder_widths.iter().enumerate() {
            encoder.push(Conv2d::same(store, &format!("g1.enc{i}"), c, w, 2, rng)?);
            c = w;
        }
        let mut residual = Vec::new();
        for i in 0..cfg.residual_blocks {
            residual.push((
                Conv2d::same(store, &format!("g1.res{i}.a"), c, c, 1, rng)?,
                Conv2d::same(store, &format!("g1.res{i}.b"), c, c, 1, rng)?,
            ));
        }
        let widths = [cfg.encoder_widths[1], cfg.encoder_widths[0], cfg.feature_channels];
        let mut decoder = Vec::new();
        for (i, &w) in widths.iter().enumerate() {
            decoder.push(Conv2d::same(store, &format!("g1.dec{i}"), c, w, 1, rng)?);
            c = w;
        }
        let head = Conv2d::same(store, "g1.head", c, 3, 1, rng)?;
        Ok(GeneratorStage1 {
            in_channels: cfg.in_channels,
            encoder,
            residual,
            decoder,
            head,
        })
    }

    /// Returns `(rgb_lo, features)`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, input: Var) -> Result<(Var, Var)> {
        match *g.shape(input) {
            [1, c, h, w] if c == self.in_channels => check_divisible(h, w)?,
            ref s => {
                return Err(Error::dim(format!(
                    "stage-1 generator expects [1, {}, h, w], got {s:?}",
                    self.in_channels
                )))
            }
        }
        let mut x = input;
        for conv in &self.encoder {
            let y = conv.forward(g, p, x)?;
            x = g.gelu(y);
        }
        for (a, b) in &self.residual {
            let y = a.forward(g, p, x)?;
            let y = g.gelu(y);
            let y = b.forward(g, p, y)?;
            x = g.add(x, y)?;
        }
        for conv in &self.decoder {
            let s = g.shape(x).to_vec();
            let up = g.resize(x, s[2] * 2, s[3] * 2, ResizeMode::Nearest)?;
            let y = conv.forward(g, p, up)?;
            x = g.gelu(y);
        }
        let rgb = self.head.forward(g, p, x)?;
        Ok((g.sigmoid(rgb), x))
    }
}

#[derive(Clone, Debug)]
pub struct Enhancer {
    pub in_channels: usize,
    pub convs: [Conv2d; 3],
}

impl Enhancer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (c, w) = (cfg.feature_channels, cfg.enhancer_width);
        Ok(Enhancer {
            in_channels: c,
            convs: [
                Conv2d::same(store, "enh.conv0", c, w, 1, rng)?,
                Conv2d::same(store, "enh.conv1", w, w, 1, rng)?,
                Conv2d::same(store, "enh.conv2", w, 3, 1, rng)?,
            ],
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, features: Var) -> Result<Var> {
        let (h, w) = match *g.shape(features) {
            [1, c, h, w] if c == self.in_channels => (h, w),
            ref s => {
                return Err(Error::dim(format!(
                    "enhancer expects [1, {}, h, w], got {s:?}",
                    self.in_channels
                )))
            }
        };
        let mut x = g.resize(features, 2 * h, 2 * w, ResizeMode::Nearest)?;
        for conv in &self.convs[..2] {
            let y = conv.forward(g, p, x)?;
            x = g.gelu(y);
        }
        let y = self.convs[2].forward(g, p, x)?;
        Ok(g.sigmoid(y))
    }
}

/// Four 3×3 stride-2 padding-1 convs. Each halves a side `s` to `⌈s/2⌉`, so
/// the logit grid is `⌈h/16⌉ × ⌈w/16⌉`.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    pub convs: [Conv2d; 4],
}

impl PatchDiscriminator {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let [a, b, c] = cfg.disc_widths;
        Ok(PatchDiscriminator {
            convs: [
                Conv2d::same(store, &format!("{prefix}.conv0"), 3, a, 2, rng)?,
                Conv2d::same(store, &format!("{prefix}.conv1"), a, b, 2, rng)?,
                Conv2d::same(store, &format!("{prefix}.conv2"), b, c, 2, rng)?,
                Conv2d::same(store, &format!("{prefix}.conv3"), c, 1, 2, rng)?,
            ],
        })
    }

    pub fn grid_side(side: usize) -> usize {
        side.div_ceil(16)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Var> {
        match *g.shape(image) {
            [1, 3, h, w] if h >= MIN_DISC_SIDE && w >= MIN_DISC_SIDE => {}
            ref s => {
                return Err(Error::dim(format!(
                    "discriminator expects [1, 3, h, w] with h, w ≥ {MIN_DISC_SIDE}, got {s:?}"
                )))
            }
        }
        let mut x = image;
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(g, p, x)?;
            if i < 3 {
                x = g.leaky_relu(x, T::lit(LEAK));
            }
        }
        Ok(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    I,
    II,
}

/// Graph handles for one full generator pass.
#[derive(Clone, Debug)]
pub struct GenVars {
    pub rgb_lo: Var,
    pub features: Var,
    pub ca: CAVars,
    pub rgb_hi: Var,
}

#[derive(Clone, Debug)]
pub struct Generated<T> {
    pub rgb_lo: Tensor<T>,
    pub rgb_hi: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct ModelBundle<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub g1: GeneratorStage1,
    pub ca: CAParams,
    pub enhancer: Enhancer,
    pub d1: PatchDiscriminator,
    pub d2: PatchDiscriminator,
    /// Identifier of the bank the model was trained against.
    pub bank_ref: Option<String>,
}

const GENERATOR_PREFIXES: [&str; 3] = ["g1.", "ca.", "enh."];
const DISCRIMINATOR_PREFIXES: [&str; 2] = ["d1.", "d2."];

pub fn is_generator_param(name: &str) -> bool {
    GENERATOR_PREFIXES.iter().any(|p| name.starts_with(p))
}

pub fn is_discriminator_param(name: &str) -> bool {
    DISCRIMINATOR_PREFIXES.iter().any(|p| name.starts_with(p))
}

impl<T: Scalar> ModelBundle<T> {
    /// Fresh parameters drawn from `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.in_channels == 0 || config.feature_channels == 0 || config.n_refs() == 0 {
            return Err(Error::arg("model widths and reference count must be positive"));
        }
        if config.stage1_res == 0 || !config.stage1_res.is_multiple_of(DIVISOR) || config.stage1_res < MIN_DISC_SIDE {
            return Err(Error::arg(format!(
                "stage1_res {} must be a multiple of {DIVISOR} and at least {MIN_DISC_SIDE}",
                config.stage1_res
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let g1 = GeneratorStage1::new(&mut store, &config, &mut rng)?;
        let ca = CAParams::new(&mut store, "ca", config.ca_config(), &mut rng)?;
        let enhancer = Enhancer::new(&mut store, &config, &mut rng)?;
        let d1 = PatchDiscriminator::new(&mut store, "d1", &config, &mut rng)?;
        let d2 = PatchDiscriminator::new(&mut store, "d2", &config, &mut rng)?;
        Ok(ModelBundle {
            config,
            store,
            g1,
            ca,
            enhancer,
            d1,
            d2,
            bank_ref: None,
        })
    }

    pub fn discriminator(&self, stage: Stage) -> &PatchDiscriminator {
        match stage {
            Stage::I => &self.d1,
            Stage::II => &self.d2,
        }
    }

    /// Stage 1, attention and enhancer. `refs` must match the input's
    /// spatial size.
    pub fn generate_graph(&self, g: &mut Graph<T>, p: &Bound, input: Var, refs: &[Var]) -> Result<GenVars> {
        let (rgb_lo, features) = self.g1.forward(g, p, input)?;
        let ca = self.ca.forward(g, p, features, refs)?;
        let rgb_hi = self.enhancer.forward(g, p, ca.out)?;
        Ok(GenVars {
            rgb_lo,
            features,
            ca,
            rgb_hi,
        })
    }

    pub fn generate(&self, input: &Tensor<T>, refs: &RefSet<T>) -> Result<Generated<T>> {
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let x = g.constant(input.clone());
        let r: Vec<Var> = refs.refs.iter().map(|t| g.constant(t.clone())).collect();
        let v = self.generate_graph(&mut g, &p, x, &r)?;
        Ok(Generated {
            rgb_lo: g.value(v.rgb_lo).clone(),
            rgb_hi: g.value(v.rgb_hi).clone(),
        })
    }

    pub fn stage1(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let x = g.constant(input.clone());
        let (rgb, feat) = self.g1.forward(&mut g, &p, x)?;
        Ok((g.value(rgb).clone(), g.value(feat).clone()))
    }

    pub fn enhance(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let x = g.constant(features.clone());
        let y = self.enhancer.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    pub fn discriminate(&self, image: &Tensor<T>, stage: Stage) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.store.bind_frozen(&mut g);
        let x = g.constant(image.clone());
        let y = self.discriminator(stage).forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    bank_ref: Option<String>,
    params: Vec<ParamRecord>,
}

impl<T: Scalar> ModelBundle<T> {
    /// Parameters are stored as `f32`; `f32` bundles round-trip bit-exactly.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            config: self.config.clone(),
            bank_ref: self.bank_ref.clone(),
            params: self
                .store
                .iter()
                .map(|(_, p)| ParamRecord {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                })
                .collect(),
        };
        let mut out = Vec::new();
        write_header(&mut out, MODEL_MAGIC, MODEL_VERSION, &manifest)?;
        for (_, p) in self.store.iter() {
            write_f32s(&mut out, p.tensor.data().iter().map(|&v| Scalar::to_f32(v)));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let manifest: Manifest = r.header(MODEL_MAGIC, MODEL_VERSION)?;
        let mut bundle = Self::new(manifest.config).map_err(|e| Error::parse(0, format!("manifest config: {e}")))?;
        if manifest.params.len() != bundle.store.len() {
            return Err(Error::parse(
                0,
                format!(
                    "manifest lists {} parameters, architecture has {}",
                    manifest.params.len(),
                    bundle.store.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(manifest.params.len());
        for (rec, (_, p)) in manifest.params.iter().zip(bundle.store.iter()) {
            if rec.name != p.name || rec.shape != p.tensor.shape() {
                return Err(Error::parse(
                    0,
                    format!(
                        "manifest entry {} {:?} does not match architecture {} {:?}",
                        rec.name,
                        rec.shape,
                        p.name,
                        p.tensor.shape()
                    ),
                ));
            }
            let at = r.offset();
            let data = r.f32s(p.tensor.len())?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(at, format!("non-finite value in {}", rec.name)));
            }
            values.push(Tensor::new(
                &rec.shape,
                data.into_iter().map(<T as Scalar>::from_f32).collect(),
            )?);
        }
        r.finish()?;
        for (i, t) in values.into_iter().enumerate() {
            let id = bundle.store.iter().nth(i).map(|(id, _)| id).expect("index in range");
            *bundle.store.tensor_mut(id) = t;
        }
        bundle.bank_ref = manifest.bank_ref;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_model<T: Scalar>(bundle: &ModelBundle<T>, path: impl AsRef<Path>) -> Result<()> {
    bundle.save(path)
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelBundle<T>> {
    ModelBundle::load(path)
}
