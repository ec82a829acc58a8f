//! Fixed-weight convolutional feature extractor.
//!
//! Three bias-free stride-2 convolutions with GeLU activations. The first
//! stage starts with four fixed Sobel-style edge filters on luminance; every
//! other weight is drawn from a ChaCha8 stream seeded with
//! [`FeatureExtractor::SEED`], uniform in `±√(6 / fan_in)`. Two taps are
//! exposed: [`Tap::Tap3`] (32 channels, stride 4) and [`Tap::Tap4`]
//! (64 channels, stride 8).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tap {
    /// Stride 4, 32 channels.
    Tap3,
    /// Stride 8, 64 channels.
    Tap4,
}

impl Tap {
    pub fn channels(self) -> usize {
        match self {
            Tap::Tap3 => 32,
            Tap::Tap4 => 64,
        }
    }

    pub fn stride(self) -> usize {
        match self {
            Tap::Tap3 => 4,
            Tap::Tap4 => 8,
        }
    }
}

const WIDTHS: [usize; 4] = [3, 16, 32, 64];
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Length of [`FeatureExtractor::pooled`].
pub const POOLED_DIM: usize = 32 + 64;

#[derive(Clone, Debug)]
pub struct FeatureExtractor<T> {
    stages: Vec<Tensor<T>>,
    seed: u64,
}

impl<T: Scalar> Default for FeatureExtractor<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> FeatureExtractor<T> {
    pub const SEED: u64 = 20_240_901;

    pub fn new() -> Self {
        Self::with_seed(Self::SEED)
    }

    pub fn with_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::with_capacity(3);
        for s in 0..3 {
            let (cin, cout) = (WIDTHS[s], WIDTHS[s + 1]);
            let fan_in = (cin * 9) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let mut w: Vec<f64> = (0..cout * cin * 9).map(|_| rng.random_range(-bound..bound)).collect();
            if s == 0 {
                for (f, kernel) in edge_kernels().iter().enumerate() {
                    for c in 0..3 {
                        for t in 0..9 {
                            w[(f * 3 + c) * 9 + t] = LUMA[c] * kernel[t];
                        }
                    }
                }
            }
            stages.push(Tensor::new(&[cout, cin, 3, 3], w.into_iter().map(T::lit).collect()).expect("static shape"));
        }
        FeatureExtractor { stages, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_input(shape: &[usize]) -> Result<()> {
        match shape {
            [_, 3, h, w] if h % 8 == 0 && w % 8 == 0 && *h > 0 && *w > 0 => Ok(()),
            [_, 3, h, w] => Err(Error::dim(format!(
                "feature extractor needs H, W divisible by 8, got {h}x{w}; pad the image first"
            ))),
            _ => Err(Error::dim(format!(
                "feature extractor expects [B,3,H,W], got {shape:?}"
            ))),
        }
    }

    /// Differentiable embedding; weights enter the graph as constants.
    pub fn embed_graph(&self, g: &mut Graph<T>, image: Var, tap: Tap) -> Result<Var> {
        let (tap3, tap4) = self.taps_graph(g, image, tap == Tap::Tap3)?;
        Ok(match tap {
            Tap::Tap3 => tap3,
            Tap::Tap4 => tap4.unwrap_or(tap3),
        })
    }

    /// Runs the stages and returns `(tap3, tap4)`. Tap 4 is skipped (`None`)
    /// when `stop_at_tap3`.
    fn taps_graph(&self, g: &mut Graph<T>, image: Var, stop_at_tap3: bool) -> Result<(Var, Option<Var>)> {
        Self::check_input(g.shape(image))?;
        let mut x = image;
        let mut tap3 = image;
        for (s, weight) in self.stages.iter().enumerate() {
            let w = g.constant(weight.clone());
            let y = g.conv2d(x, w, None, 2, 1)?;
            x = g.gelu(y);
            if s == 1 {
                tap3 = x;
                if stop_at_tap3 {
                    return Ok((tap3, None));
                }
            }
        }
        Ok((tap3, Some(x)))
    }

    pub fn embed(&self, image: &Tensor<T>, tap: Tap) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.constant(image.clone());
        let y = self.embed_graph(&mut g, x, tap)?;
        Ok(g.value(y).clone())
    }

    /// Global-average-pooled tap 3 and tap 4 features, concatenated.
    pub fn pooled(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let x = g.constant(image.clone());
        let (t3, t4) = self.taps_graph(&mut g, x, false)?;
        let t4 = t4.ok_or_else(|| Error::dim("tap 4 not computed"))?;
        let mut v = ops::global_avg_pool(g.value(t3))?.into_data();
        v.extend(ops::global_avg_pool(g.value(t4))?.into_data());
        Ok(v)
    }

    /// Global-average-pooled tap 4 features.
    pub fn pooled_tap4(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        Ok(ops::global_avg_pool(&self.embed(image, Tap::Tap4)?)?.into_data())
    }
}

/// Horizontal, vertical and both diagonal Sobel kernels, row-major 3×3.
fn edge_kernels() -> [[f64; 9]; 4] {
    [
        [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
        [0.0, 1.0, 2.0, -1.0, 0.0, 1.0, -2.0, -1.0, 0.0],
        [-2.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 2.0],
    ]
}
