use std::collections::VecDeque;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::bank::Rect;
use crate::error::{Error, Result};
use crate::imageio::{gray_to_tensor, rgb_to_tensor};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const HYSTERESIS_HIGH: f64 = 0.2;
pub const HYSTERESIS_LOW: f64 = 0.08;

/// Generator input: line sketch (dark lines on white) plus colour mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchCanvas<T> {
    /// `[1, 1, H, W]` in `[0, 1]`.
    pub sketch: Tensor<T>,
    /// `[1, 3, H, W]` in `[0, 1]`; all zero when absent.
    pub mask: Tensor<T>,
    pub provenance: Vec<Rect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub w: usize,
    pub h: usize,
}

impl<T: Scalar> SketchCanvas<T> {
    pub fn new(sketch: Tensor<T>, mask: Option<Tensor<T>>) -> Result<Self> {
        let (b, c, h, w) = sketch.dims4()?;
        if b != 1 || c != 1 {
            return Err(Error::dim(format!(
                "sketch must be [1,1,H,W], got {:?}",
                sketch.shape()
            )));
        }
        let mask = mask.unwrap_or_else(|| Tensor::zeros(&[1, 3, h, w]));
        if mask.shape() != [1, 3, h, w] {
            return Err(Error::dim(format!(
                "mask {:?} does not match sketch {h}x{w}",
                mask.shape()
            )));
        }
        let unit = |t: &Tensor<T>| t.data().iter().all(|v| *v >= T::zero() && *v <= T::one());
        if !unit(&sketch) || !unit(&mask) {
            return Err(Error::arg("sketch and mask values must lie in [0, 1]"));
        }
        Ok(SketchCanvas {
            sketch,
            mask,
            provenance: Vec::new(),
        })
    }

    pub fn from_images(sketch: &GrayImage, mask: Option<&RgbImage>) -> Result<Self> {
        Self::new(gray_to_tensor(sketch), mask.map(rgb_to_tensor))
    }

    pub fn size(&self) -> Size {
        let s = self.sketch.shape();
        Size { w: s[3], h: s[2] }
    }

    /// `[1, 4, H, W]`: sketch then mask.
    pub fn input_tensor(&self) -> Result<Tensor<T>> {
        ops::concat(&[&self.sketch, &self.mask], 1)
    }

    pub fn crop(&self, r: Rect) -> Result<Self> {
        Ok(SketchCanvas {
            sketch: self.sketch.crop(r.y, r.x, r.h, r.w)?,
            mask: self.mask.crop(r.y, r.x, r.h, r.w)?,
            provenance: Vec::new(),
        })
    }
}

/// Deterministic line drawing of `image` as `[1, 1, H, W]` with values in
/// `{0, 1}` (0 = line).
///
/// Luma, 3×3 Sobel magnitude with replicated borders, normalisation by the
/// maximum, hysteresis (8-connected), one Zhang–Suen thinning iteration, and
/// inversion.
pub fn extract_sketch<T: Scalar>(image: &RgbImage) -> Result<Tensor<T>> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w < 3 || h < 3 {
        return Err(Error::dim(format!("sketch extraction needs at least 3x3, got {w}x{h}")));
    }
    let luma: Vec<f64> = image
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        luma[yc * w + xc]
    };
    let mut mag = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            mag[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    let mut edges = vec![false; w * h];
    if max > 0.0 {
        mag.iter_mut().for_each(|m| *m /= max);
        edges = hysteresis(&mag, w, h, HYSTERESIS_HIGH, HYSTERESIS_LOW);
        thin_once(&mut edges, w, h);
    }
    Tensor::new(
        &[1, 1, h, w],
        edges.iter().map(|&e| if e { T::zero() } else { T::one() }).collect(),
    )
}

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1)
        .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then_some((nx as usize, ny as usize))
        })
}

fn hysteresis(mag: &[f64], w: usize, h: usize, hi: f64, lo: f64) -> Vec<bool> {
    let mut keep = vec![false; w * h];
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if mag[y * w + x] >= hi {
                keep[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (nx, ny) in neighbours(x, y, w, h) {
            let i = ny * w + nx;
            if !keep[i] && mag[i] >= lo {
                keep[i] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    keep
}

/// One Zhang–Suen iteration (both sub-passes). Borders are replicated, so
/// lines running off the image keep their endpoints.
fn thin_once(img: &mut [bool], w: usize, h: usize) {
    for pass in 0..2 {
        let snapshot = img.to_vec();
        let px = |x: isize, y: isize| -> u8 {
            let xc = x.clamp(0, w as isize - 1) as usize;
            let yc = y.clamp(0, h as isize - 1) as usize;
            snapshot[yc * w + xc] as u8
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                if px(x, y) == 0 {
                    continue;
                }
                // P2..P9 clockwise from north
                let p = [
                    px(x, y - 1),
                    px(x + 1, y - 1),
                    px(x + 1, y),
                    px(x + 1, y + 1),
                    px(x, y + 1),
                    px(x - 1, y + 1),
                    px(x - 1, y),
                    px(x - 1, y - 1),
                ];
                let b: u8 = p.iter().sum();
                let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                let (c1, c2) = if pass == 0 {
                    (p[0] * p[2] * p[4], p[2] * p[4] * p[6])
                } else {
                    (p[0] * p[2] * p[6], p[0] * p[4] * p[6])
                };
                if (2..=6).contains(&b) && a == 1 && c1 == 0 && c2 == 0 {
                    img[y as usize * w + x as usize] = false;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn constant_image_is_blank() {
        let s: Tensor<f32> = extract_sketch(&RgbImage::from_pixel(9, 7, Rgb([90, 20, 200]))).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn vertical_step_gives_single_line() {
        let img = RgbImage::from_fn(16, 12, |x, _| if x < 8 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        let s: Tensor<f32> = extract_sketch(&img).unwrap();
        let mut cols = Vec::new();
        for y in 0..12 {
            let row: Vec<usize> = (0..16).filter(|&x| s.at4(0, 0, y, x) == 0.0).collect();
            assert_eq!(row.len(), 1, "row {y}: {row:?}");
            cols.push(row[0]);
        }
        assert!(cols.iter().all(|&c| c == cols[0]) && (7..=8).contains(&cols[0]));
    }

    #[test]
    fn tiny_images_are_rejected() {
        assert!(extract_sketch::<f32>(&RgbImage::new(2, 5)).is_err());
    }
}
