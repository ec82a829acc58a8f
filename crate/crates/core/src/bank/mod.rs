//! Reference bank: clustered multi-resolution patches of the source painting.
//!
//! Construction runs in three steps. [`decompose_multires`] cuts sliding-window
//! patches at several sizes. [`build_bank`] embeds each patch with the fixed
//! feature extractor (pooled tap 3 and tap 4 vectors, concatenated) and
//! clusters the embeddings with average-linkage agglomeration under cosine
//! distance. Undersized clusters become outliers. At training and inference
//! time [`sample_ordered_refs`] draws category-ordered reference sets.

mod cluster;
mod io;
mod pca;

use image::RgbImage;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cluster::{average_linkage, cosine_distance, Condensed, Dendrogram, Merge};
pub use io::{load_bank, save_bank, BANK_MAGIC, BANK_VERSION};
pub use pca::{pca_project, Projection};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::imageio::rgb_to_tensor;
use crate::ops::{self, ResizeMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Ratio;

/// Patch side length that every bank patch is resized to before embedding.
pub const EMBED_SIZE: usize = 32;

/// Desk-scale default patch sizes.
pub const DEFAULT_SIZES: [usize; 3] = [8, 16, 32];

pub const DEFAULT_MIN_CATEGORY_SIZE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Label(usize),
    Outlier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefPatch {
    pub pixels: RgbImage,
    pub source_rect: Rect,
    pub scale: usize,
    pub embedding: Vec<f32>,
    pub category: Category,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceBank {
    pub patches: Vec<RefPatch>,
    pub k: usize,
    pub linkage: Dendrogram,
    pub min_category_size: usize,
    pub sizes: Vec<usize>,
    pub extractor_seed: u64,
}

impl ReferenceBank {
    /// Patch indices of each category, in patch order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, p) in self.patches.iter().enumerate() {
            if let Category::Label(c) = p.category {
                m[c].push(i);
            }
        }
        m
    }

    pub fn outlier_count(&self) -> usize {
        self.patches.iter().filter(|p| p.category == Category::Outlier).count()
    }
}

/// Ordered reference images for the attention module: `n` blocks, each with
/// one sample of category `0..k` in order.
#[derive(Clone, Debug, PartialEq)]
pub struct RefSet<T> {
    pub refs: Vec<Tensor<T>>,
    pub categories: Vec<usize>,
    pub k: usize,
}

impl<T: Scalar> RefSet<T> {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn from_refs(refs: Vec<Tensor<T>>) -> Self {
        let n = refs.len();
        RefSet {
            refs,
            categories: vec![0; n],
            k: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedSize {
    pub size: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub patches: Vec<RefPatch>,
    pub skipped: Vec<SkippedSize>,
}

/// Integer stride `⌊size · ratio⌋`, at least 1.
pub fn patch_stride(size: usize, ratio: Ratio) -> usize {
    ((ratio * size).to_integer()).max(1)
}

/// Closed-form number of windows of side `size` over an `h × w` image.
pub fn window_count(h: usize, w: usize, size: usize, stride: usize) -> usize {
    if size > h || size > w {
        return 0;
    }
    ((h - size) / stride + 1) * ((w - size) / stride + 1)
}

pub fn decompose_multires(painting: &RgbImage, sizes: &[usize], stride_ratio: Ratio) -> Result<Decomposition> {
    if stride_ratio <= Ratio::from_integer(0) || stride_ratio > Ratio::from_integer(1) {
        return Err(Error::arg(format!("stride ratio {stride_ratio} outside (0, 1]")));
    }
    let (pw, ph) = (painting.width() as usize, painting.height() as usize);
    let mut patches = Vec::new();
    let mut skipped = Vec::new();
    for &size in sizes {
        if size == 0 || size > pw.min(ph) {
            warn!("skipping patch size {size}: painting is {pw}x{ph}");
            skipped.push(SkippedSize {
                size,
                reason: format!("size {size} does not fit a {pw}x{ph} painting"),
            });
            continue;
        }
        let stride = patch_stride(size, stride_ratio);
        for y in (0..=ph - size).step_by(stride) {
            for x in (0..=pw - size).step_by(stride) {
                let pixels =
                    image::imageops::crop_imm(painting, x as u32, y as u32, size as u32, size as u32).to_image();
                patches.push(RefPatch {
                    pixels,
                    source_rect: Rect::new(x, y, size, size),
                    scale: size,
                    embedding: Vec::new(),
                    category: Category::Outlier,
                });
            }
        }
    }
    Ok(Decomposition { patches, skipped })
}

/// Pooled embedding of one patch after bilinear resizing to [`EMBED_SIZE`].
pub fn embed_patch(pixels: &RgbImage, extractor: &FeatureExtractor<f32>) -> Result<Vec<f32>> {
    let t = rgb_to_tensor::<f32>(pixels);
    let t = ops::resize(&t, EMBED_SIZE, EMBED_SIZE, ResizeMode::Bilinear)?;
    extractor.pooled(&t)
}

pub fn build_bank(
    mut patches: Vec<RefPatch>,
    extractor: &FeatureExtractor<f32>,
    k_target: usize,
    min_category_size: usize,
) -> Result<ReferenceBank> {
    if k_target == 0 {
        return Err(Error::arg("k_target must be ≥ 1"));
    }
    if patches.len() < k_target * min_category_size.max(1) {
        return Err(Error::Bank(format!(
            "{} patches cannot form {k_target} categories of at least {min_category_size}",
            patches.len()
        )));
    }
    for p in patches.iter_mut() {
        p.embedding = embed_patch(&p.pixels, extractor)?;
    }
    let vectors: Vec<Vec<f64>> = patches
        .iter()
        .map(|p| p.embedding.iter().map(|&v| v as f64).collect())
        .collect();
    let dist = Condensed::from_fn(vectors.len(), |i, j| cosine_distance(&vectors[i], &vectors[j]));
    let linkage = average_linkage(dist);
    let labels = linkage.cut(k_target);

    let clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; clusters];
    for &l in &labels {
        counts[l] += 1;
    }
    // `cut` numbers clusters by first member, so keeping that order gives
    // labels ordered by smallest patch index.
    let mut remap = vec![None; clusters];
    let mut k = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n >= min_category_size {
            remap[c] = Some(k);
            k += 1;
        }
    }
    if k == 0 {
        return Err(Error::Bank(format!(
            "every cluster is smaller than the minimum category size {min_category_size}"
        )));
    }
    for (p, &l) in patches.iter_mut().zip(&labels) {
        p.category = remap[l].map_or(Category::Outlier, Category::Label);
    }
    let mut sizes: Vec<usize> = patches.iter().map(|p| p.scale).collect();
    sizes.sort_unstable();
    sizes.dedup();
    Ok(ReferenceBank {
        patches,
        k,
        linkage,
        min_category_size,
        sizes,
        extractor_seed: extractor.seed(),
    })
}

pub fn sample_ordered_refs<T: Scalar>(
    bank: &ReferenceBank,
    n_per_category: usize,
    target_h: usize,
    target_w: usize,
    seed: u64,
) -> Result<RefSet<T>> {
    if n_per_category == 0 {
        return Err(Error::arg("n_per_category must be ≥ 1"));
    }
    let members = bank.members();
    if members.is_empty() || members.iter().any(Vec::is_empty) {
        return Err(Error::Bank("bank has an empty category".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut refs = Vec::with_capacity(n_per_category * bank.k);
    let mut categories = Vec::with_capacity(n_per_category * bank.k);
    for _ in 0..n_per_category {
        for (c, m) in members.iter().enumerate() {
            let patch = &bank.patches[m[rng.random_range(0..m.len())]];
            refs.push(fit_ref_to_input(&rgb_to_tensor(&patch.pixels), target_h, target_w)?);
            categories.push(c);
        }
    }
    Ok(RefSet {
        refs,
        categories,
        k: bank.k,
    })
}

/// Aspect-preserving fit: one bilinear scale factor `min(th/h, tw/w)`, then
/// zero padding on the bottom and right.
pub fn fit_ref_to_input<T: Scalar>(reference: &Tensor<T>, target_h: usize, target_w: usize) -> Result<Tensor<T>> {
    let (_, _, h, w) = reference.dims4()?;
    if h == 0 || w == 0 || target_h == 0 || target_w == 0 {
        return Err(Error::dim(format!("fit {h}x{w} into {target_h}x{target_w}")));
    }
    let scale = Ratio::new(target_h, h).min(Ratio::new(target_w, w));
    let round = |len: usize| (scale * len).round().to_integer().max(1);
    let (nh, nw) = (round(h).min(target_h), round(w).min(target_w));
    let resized = ops::resize(reference, nh, nw, ResizeMode::Bilinear)?;
    ops::pad2d(&resized, 0, target_h - nh, 0, target_w - nw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn painting(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            Rgb([(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x + y) % 256) as u8])
        })
    }

    #[test]
    fn decomposition_counts() {
        let half = Ratio::new(1, 2);
        let d = decompose_multires(&painting(32, 32), &[16], half).unwrap();
        assert_eq!(d.patches.len(), 9);
        let d = decompose_multires(&painting(32, 32), &[16, 32], half).unwrap();
        assert_eq!(d.patches.len(), 10);
        let d = decompose_multires(&painting(32, 32), &[16, 64], half).unwrap();
        assert_eq!(d.patches.len(), 9);
        assert_eq!(d.skipped.len(), 1);
        assert!(decompose_multires(&painting(8, 8), &[4], Ratio::new(3, 2)).is_err());
    }

    #[test]
    fn decomposition_rects_enumerated() {
        // 64 wide, 48 high.
        let p = painting(64, 48);
        let d = decompose_multires(&p, &[16], Ratio::new(1, 2)).unwrap();
        assert_eq!(d.patches.len(), 35);
        let mut expected = Vec::new();
        for y in 0..48 {
            for x in 0..64 {
                if x % 8 == 0 && y % 8 == 0 && x + 16 <= 64 && y + 16 <= 48 {
                    expected.push(Rect::new(x, y, 16, 16));
                }
            }
        }
        let got: Vec<Rect> = d.patches.iter().map(|p| p.source_rect).collect();
        assert_eq!(got, expected);
        for patch in &d.patches {
            let r = patch.source_rect;
            assert_eq!(*patch.pixels.get_pixel(0, 0), *p.get_pixel(r.x as u32, r.y as u32));
        }
    }

    #[test]
    fn fit_places_content_top_left() {
        let src = Tensor::<f64>::full(&[1, 3, 8, 16], 0.7);
        let out = fit_ref_to_input(&src, 16, 16).unwrap();
        assert_eq!(out.shape(), &[1, 3, 16, 16]);
        for c in 0..3 {
            for y in 0..16 {
                for x in 0..16 {
                    let v = out.at4(0, c, y, x);
                    if y < 8 {
                        assert_eq!(v, 0.7);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        let same = Tensor::<f64>::from_fn(&[1, 3, 16, 16], |i| i as f64);
        assert_eq!(fit_ref_to_input(&same, 16, 16).unwrap(), same);
        let big = Tensor::<f64>::full(&[1, 3, 32, 32], 0.25);
        let shrunk = fit_ref_to_input(&big, 16, 16).unwrap();
        assert!(shrunk.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }
}
