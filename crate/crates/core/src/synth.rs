//! Synthetic paintings for demos and tests.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-colour checkerboard of `cell`-pixel squares with seeded per-pixel
/// noise of up to `±noise` levels. `phase` shifts the pattern diagonally.
pub fn checker_texture(w: u32, h: u32, cell: u32, phase: u32, noise: u8, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = [196i16, 142, 64];
    let b = [38i16, 62, 118];
    RgbImage::from_fn(w, h, |x, y| {
        let on = ((x + phase) / cell + (y + phase) / cell).is_multiple_of(2);
        let base = if on { a } else { b };
        let n = noise as i16;
        Rgb(std::array::from_fn(|c| {
            let d = if n > 0 { rng.random_range(-n..=n) } else { 0 };
            (base[c] + d).clamp(0, 255) as u8
        }))
    })
}

/// Diagonal colour stripes of period `period`.
pub fn stripes(w: u32, h: u32, period: u32) -> RgbImage {
    let palette = [[230u8, 190, 90], [60, 120, 70], [140, 40, 50]];
    RgbImage::from_fn(w, h, |x, y| Rgb(palette[(((x + y) / period.max(1)) % 3) as usize]))
}
