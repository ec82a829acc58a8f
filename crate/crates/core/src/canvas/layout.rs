use serde::{Deserialize, Serialize};

use crate::bank::Rect;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub rect: Rect,
}

/// Row-major grid of overlapping tiles. Tiles step by `tile − overlap`; when
/// that does not land on the far edge a final tile is snapped flush to it,
/// so its overlap with the previous tile can exceed the nominal width. If
/// the snapped tile would reach back over two tiles it replaces the last one
/// instead, which keeps per-pixel coverage at most 4 whenever
/// `overlap ≤ tile / 2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub tile_w: usize,
    pub tile_h: usize,
    pub overlap_w: usize,
    pub overlap_h: usize,
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub tiles: Vec<Tile>,
}

fn axis_positions(canvas: usize, tile: usize, overlap: usize, axis: &str) -> Result<Vec<usize>> {
    if tile == 0 || tile > canvas {
        return Err(Error::arg(format!("{axis}: tile {tile} does not fit canvas {canvas}")));
    }
    if overlap >= tile {
        return Err(Error::arg(format!(
            "{axis}: overlap {overlap} must be smaller than tile {tile}"
        )));
    }
    let stride = tile - overlap;
    let mut xs: Vec<usize> = (0..).map(|i| i * stride).take_while(|&x| x + tile <= canvas).collect();
    if xs.last().is_some_and(|&x| x + tile < canvas) {
        let snapped = canvas - tile;
        // Move the last tile instead of adding one when the new tile would
        // also overlap the one before it.
        let n = xs.len();
        if n >= 2 && snapped < xs[n - 2] + tile {
            xs[n - 1] = snapped;
        } else {
            xs.push(snapped);
        }
    }
    Ok(xs)
}

pub fn decompose_canvas(
    canvas_w: usize,
    canvas_h: usize,
    tile_w: usize,
    tile_h: usize,
    overlap_w: usize,
    overlap_h: usize,
) -> Result<TileLayout> {
    let xs = axis_positions(canvas_w, tile_w, overlap_w, "width")?;
    let ys = axis_positions(canvas_h, tile_h, overlap_h, "height")?;
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            tiles.push(Tile {
                index: tiles.len(),
                row,
                col,
                rect: Rect::new(x, y, tile_w, tile_h),
            });
        }
    }
    Ok(TileLayout {
        canvas_w,
        canvas_h,
        tile_w,
        tile_h,
        overlap_w,
        overlap_h,
        xs,
        ys,
        tiles,
    })
}

impl TileLayout {
    /// A layout with one tile covering the whole canvas.
    pub fn single(w: usize, h: usize) -> Result<Self> {
        decompose_canvas(w, h, w, h, 0, 0)
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Every coordinate and size multiplied by `f`.
    pub fn scaled(&self, f: usize) -> Self {
        TileLayout {
            canvas_w: self.canvas_w * f,
            canvas_h: self.canvas_h * f,
            tile_w: self.tile_w * f,
            tile_h: self.tile_h * f,
            overlap_w: self.overlap_w * f,
            overlap_h: self.overlap_h * f,
            xs: self.xs.iter().map(|x| x * f).collect(),
            ys: self.ys.iter().map(|y| y * f).collect(),
            tiles: self
                .tiles
                .iter()
                .map(|t| Tile {
                    rect: Rect::new(t.rect.x * f, t.rect.y * f, t.rect.w * f, t.rect.h * f),
                    ..*t
                })
                .collect(),
        }
    }

    pub fn check_divisible(&self, divisor: usize) -> Result<()> {
        if !self.tile_w.is_multiple_of(divisor) || !self.tile_h.is_multiple_of(divisor) {
            return Err(Error::dim(format!(
                "tile {}x{} must have both sides divisible by {divisor}",
                self.tile_w, self.tile_h
            )));
        }
        Ok(())
    }

    /// Number of tiles covering each canvas pixel, row-major.
    pub fn coverage(&self) -> Vec<u32> {
        let mut c = vec![0u32; self.canvas_w * self.canvas_h];
        for t in &self.tiles {
            for y in t.rect.y..t.rect.bottom() {
                for x in t.rect.x..t.rect.right() {
                    c[y * self.canvas_w + x] += 1;
                }
            }
        }
        c
    }

    /// Ramp weights along one axis, indexed by tile position then local offset.
    fn axis_weights(positions: &[usize], tile: usize) -> Vec<Vec<f64>> {
        positions
            .iter()
            .enumerate()
            .map(|(a, &start)| {
                (0..tile)
                    .map(|i| {
                        let p = start + i;
                        let mut w = 1.0;
                        if a > 0 {
                            let prev_end = positions[a - 1] + tile;
                            if p < prev_end {
                                w *= i as f64 / (prev_end - start) as f64;
                            }
                        }
                        if let Some(&next) = positions.get(a + 1) {
                            if p >= next {
                                let width = (start + tile - next) as f64;
                                w *= (width - (p - next) as f64) / width;
                            }
                        }
                        w
                    })
                    .collect()
            })
            .collect()
    }
}

/// Cross-fade overlapping tiles into one canvas.
///
/// Inside an overlap of width `W` starting at the right tile's left edge,
/// the left tile's weight at local offset `i` is `(W − i)/W` and the right
/// tile's is `i/W`; vertical overlaps likewise. A tile's weight is the
/// product of its horizontal and vertical ramps, and the blended pixel is the
/// weight-normalised sum, accumulated in tile order in `f64`.
pub fn blend<T: Scalar>(tiles: &[Tensor<T>], layout: &TileLayout) -> Result<Tensor<T>> {
    if tiles.len() != layout.tiles.len() {
        return Err(Error::dim(format!(
            "{} tile images for a {}-tile layout",
            tiles.len(),
            layout.tiles.len()
        )));
    }
    let channels = match tiles.first() {
        Some(t) => t.dims4()?.1,
        None => return Err(Error::arg("empty layout")),
    };
    for (i, t) in tiles.iter().enumerate() {
        if t.shape() != [1, channels, layout.tile_h, layout.tile_w] {
            return Err(Error::dim(format!(
                "tile {i} has shape {:?}, layout expects [1, {channels}, {}, {}]",
                t.shape(),
                layout.tile_h,
                layout.tile_w
            )));
        }
    }
    let wx = TileLayout::axis_weights(&layout.xs, layout.tile_w);
    let wy = TileLayout::axis_weights(&layout.ys, layout.tile_h);
    let (cw, ch) = (layout.canvas_w, layout.canvas_h);
    let plane = cw * ch;
    let mut acc = vec![0.0f64; channels * plane];
    let mut norm = vec![0.0f64; plane];
    for (tile, img) in layout.tiles.iter().zip(tiles) {
        let r = tile.rect;
        let d = img.data();
        let tplane = r.w * r.h;
        for ty in 0..r.h {
            for tx in 0..r.w {
                let w = wy[tile.row][ty] * wx[tile.col][tx];
                let o = (r.y + ty) * cw + r.x + tx;
                norm[o] += w;
                for c in 0..channels {
                    acc[c * plane + o] += w * d[c * tplane + ty * r.w + tx].as_f64();
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, a)| T::lit(a / norm[i % plane]))
        .collect();
    Tensor::new(&[1, channels, ch, cw], data)
}
