//! Large-canvas generation: sketch extraction, tiling, blending, and the
//! shuffle and genre-switch editing operations.

mod layout;
mod sketch;

use std::sync::atomic::{AtomicBool, Ordering};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use layout::{blend, decompose_canvas, Tile, TileLayout};
pub use sketch::{extract_sketch, Size, SketchCanvas, HYSTERESIS_HIGH, HYSTERESIS_LOW};

use crate::bank::{sample_ordered_refs, RefSet, ReferenceBank};
use crate::error::{Error, Result};
use crate::imageio::rgb_to_tensor;
use crate::networks::{ModelBundle, DIVISOR};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use image::RgbImage;

/// Reference set for a tile of `tile_h × tile_w` drawn from `seed`.
pub fn tile_refs<T: Scalar>(
    model: &ModelBundle<T>,
    bank: &ReferenceBank,
    tile_h: usize,
    tile_w: usize,
    seed: u64,
) -> Result<RefSet<T>> {
    if bank.k != model.config.bank_k {
        return Err(Error::Bank(format!(
            "model attends to {} categories, bank has {}",
            model.config.bank_k, bank.k
        )));
    }
    sample_ordered_refs(bank, model.config.n_refs_per_category, tile_h, tile_w, seed)
}

/// Generate every tile and blend at twice the canvas resolution. One
/// reference set, drawn from `seed`, is shared by all tiles.
pub fn generate_large<T: Scalar>(
    canvas: &SketchCanvas<T>,
    model: &ModelBundle<T>,
    bank: &ReferenceBank,
    layout: &TileLayout,
    seed: u64,
) -> Result<Tensor<T>> {
    let refs = tile_refs(model, bank, layout.tile_h, layout.tile_w, seed)?;
    generate_large_with_refs(canvas, model, &refs, layout, None)
}

/// As [`generate_large`] with an explicit reference set. When `cancel` is
/// set, pending tiles are skipped and [`Error::Cancelled`] is returned.
pub fn generate_large_with_refs<T: Scalar>(
    canvas: &SketchCanvas<T>,
    model: &ModelBundle<T>,
    refs: &RefSet<T>,
    layout: &TileLayout,
    cancel: Option<&AtomicBool>,
) -> Result<Tensor<T>> {
    let size = canvas.size();
    if size.w != layout.canvas_w || size.h != layout.canvas_h {
        return Err(Error::dim(format!(
            "canvas {}x{} does not match layout {}x{}",
            size.w, size.h, layout.canvas_w, layout.canvas_h
        )));
    }
    layout.check_divisible(DIVISOR)?;
    let input = canvas.input_tensor()?;
    let tiles: Vec<Tensor<T>> = layout
        .tiles
        .par_iter()
        .map(|t| {
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                return Err(Error::Cancelled);
            }
            let r = t.rect;
            let x = input.crop(r.y, r.x, r.h, r.w)?;
            Ok(model.generate(&x, refs)?.rgb_hi)
        })
        .collect::<Result<_>>()?;
    blend(&tiles, &layout.scaled(2))
}

/// Permute the `grid_n × grid_n` blocks of sketch and mask: output block `b`
/// is input block `perm[b]` (row-major block indices).
pub fn shuffle_with_permutation<T: Scalar>(
    canvas: &SketchCanvas<T>,
    grid_n: usize,
    perm: &[usize],
) -> Result<SketchCanvas<T>> {
    let Size { w, h } = canvas.size();
    if grid_n == 0 || w % grid_n != 0 || h % grid_n != 0 {
        return Err(Error::dim(format!(
            "canvas {w}x{h} is not divisible into a {grid_n}x{grid_n} grid"
        )));
    }
    let n = grid_n * grid_n;
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::arg(format!("not a permutation of {n} blocks")));
    }
    let (bw, bh) = (w / grid_n, h / grid_n);
    let move_blocks = |t: &Tensor<T>| -> Tensor<T> {
        let c = t.shape()[1];
        let src = t.data();
        let mut out = vec![T::zero(); src.len()];
        for (dst_b, &src_b) in perm.iter().enumerate() {
            let (dy, dx) = ((dst_b / grid_n) * bh, (dst_b % grid_n) * bw);
            let (sy, sx) = ((src_b / grid_n) * bh, (src_b % grid_n) * bw);
            for ch in 0..c {
                for y in 0..bh {
                    let s = ch * w * h + (sy + y) * w + sx;
                    let d = ch * w * h + (dy + y) * w + dx;
                    out[d..d + bw].copy_from_slice(&src[s..s + bw]);
                }
            }
        }
        Tensor::new(t.shape(), out).expect("same shape")
    };
    Ok(SketchCanvas {
        sketch: move_blocks(&canvas.sketch),
        mask: move_blocks(&canvas.mask),
        provenance: canvas.provenance.clone(),
    })
}

/// The block permutation [`shuffle_patches`] applies for `seed`.
pub fn shuffle_permutation(grid_n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..grid_n * grid_n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

pub fn shuffle_patches<T: Scalar>(canvas: &SketchCanvas<T>, grid_n: usize, seed: u64) -> Result<SketchCanvas<T>> {
    shuffle_with_permutation(canvas, grid_n, &shuffle_permutation(grid_n, seed))
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

#[derive(Clone, Debug)]
pub struct GenreSwitch<T> {
    /// The sketch extracted from the source painting, fed to the target model.
    pub sketch: Tensor<T>,
    pub painting: Tensor<T>,
}

/// Re-render `painting` through another genre's model. The canvas is decomposed
/// into tiles of `tile` pixels (or processed whole when `None`).
pub fn genre_switch<T: Scalar>(
    painting: &RgbImage,
    target_model: &ModelBundle<T>,
    target_bank: &ReferenceBank,
    tile: Option<(usize, usize, usize, usize)>,
    seed: u64,
) -> Result<GenreSwitch<T>> {
    let sketch: Tensor<T> = extract_sketch(painting)?;
    let canvas = SketchCanvas::new(sketch.clone(), None)?;
    let Size { w, h } = canvas.size();
    let layout = match tile {
        Some((tw, th, ow, oh)) => decompose_canvas(w, h, tw, th, ow, oh)?,
        None => TileLayout::single(w, h)?,
    };
    info!("genre switch: {w}x{h} sketch, {} tiles", layout.len());
    let out = generate_large(&canvas, target_model, target_bank, &layout, seed)?;
    Ok(GenreSwitch { sketch, painting: out })
}

/// Colour mask from a painting: the mean colour of each `block × block`
/// cell, used as the semantic hint during training.
pub fn block_color_mask<T: Scalar>(painting: &RgbImage, block: usize) -> Result<Tensor<T>> {
    let t: Tensor<f64> = rgb_to_tensor(painting);
    let (_, _, h, w) = t.dims4()?;
    if block == 0 {
        return Err(Error::arg("mask block size must be ≥ 1"));
    }
    let mut out = vec![T::zero(); 3 * h * w];
    for c in 0..3 {
        for by in (0..h).step_by(block) {
            for bx in (0..w).step_by(block) {
                let (ey, ex) = ((by + block).min(h), (bx + block).min(w));
                let mut s = 0.0;
                for y in by..ey {
                    for x in bx..ex {
                        s += t.at4(0, c, y, x);
                    }
                }
                let m = T::lit(s / ((ey - by) * (ex - bx)) as f64);
                for y in by..ey {
                    for x in bx..ex {
                        out[c * h * w + y * w + x] = m;
                    }
                }
            }
        }
    }
    Tensor::new(&[1, 3, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(w: usize, h: usize) -> SketchCanvas<f32> {
        let sketch = Tensor::from_fn(&[1, 1, h, w], |i| (i % 7) as f32 / 6.0);
        let mask = Tensor::from_fn(&[1, 3, h, w], |i| (i % 5) as f32 / 4.0);
        SketchCanvas::new(sketch, Some(mask)).unwrap()
    }

    #[test]
    fn identity_permutation_is_a_no_op() {
        let c = canvas(8, 8);
        let same = shuffle_with_permutation(&c, 4, &(0..16).collect::<Vec<_>>()).unwrap();
        assert_eq!(same, c);
    }

    #[test]
    fn inverse_permutation_restores() {
        let c = canvas(12, 8);
        let perm = shuffle_permutation(4, 7);
        let s = shuffle_with_permutation(&c, 4, &perm).unwrap();
        assert_eq!(s, shuffle_patches(&c, 4, 7).unwrap());
        let back = shuffle_with_permutation(&s, 4, &inverse_permutation(&perm)).unwrap();
        assert_eq!(back, c);
        let mut a: Vec<u32> = c.sketch.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = s.sketch.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn shuffle_checks_divisibility_and_permutation() {
        let c = canvas(10, 8);
        assert!(shuffle_patches(&c, 4, 0).is_err());
        assert!(shuffle_with_permutation(&canvas(8, 8), 2, &[0, 0, 1, 2]).is_err());
    }

    #[test]
    fn block_mask_averages() {
        let img = RgbImage::from_fn(4, 2, |x, _| image::Rgb([if x < 2 { 0 } else { 255 }, 0, 0]));
        let m: Tensor<f64> = block_color_mask(&img, 2).unwrap();
        assert_eq!(m.at4(0, 0, 0, 0), 0.0);
        assert_eq!(m.at4(0, 0, 1, 3), 1.0);
        let m: Tensor<f64> = block_color_mask(&img, 4).unwrap();
        assert_eq!(m.at4(0, 0, 0, 0), 0.5);
    }
}
