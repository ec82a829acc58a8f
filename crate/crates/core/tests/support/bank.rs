//! Oracle for reference-bank clustering: separable patch populations and
//! average linkage evaluated straight from its definition.

use std::collections::BTreeSet;

use image::{Rgb, RgbImage};
use polyptych_core::bank::{Category, Rect, RefPatch};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Partition = BTreeSet<BTreeSet<usize>>;

pub fn population(kind: usize, side: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let noise = |rng: &mut ChaCha8Rng, v: u8| (v as i16 + rng.random_range(-6i16..=6)).clamp(0, 255) as u8;
    let (hi, lo) = ([220u8, 200, 60], [30u8, 40, 150]);
    let mut img = RgbImage::new(side, side);
    for y in 0..side {
        for x in 0..side {
            let on = match kind {
                0 => (y / 2) % 2 == 0,
                1 => (x / 2) % 2 == 0,
                _ => ((x / 2) + (y / 2)) % 2 == 0,
            };
            let c = if on { hi } else { lo };
            img.put_pixel(x, y, Rgb(c.map(|v| noise(rng, v))));
        }
    }
    img
}

pub fn fixture(seed: u64) -> (Vec<RefPatch>, Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=3);
    let mut kinds = [0, 1, 2];
    kinds.shuffle(&mut rng);
    let side = if rng.random_bool(0.5) { 8 } else { 16 };
    let mut items = Vec::new();
    for &kind in &kinds[..k] {
        for _ in 0..rng.random_range(3..=6) {
            items.push((population(kind, side, &mut rng), kind));
        }
    }
    items.shuffle(&mut rng);
    let truth = items.iter().map(|(_, k)| *k).collect();
    let patches = items
        .into_iter()
        .enumerate()
        .map(|(i, (pixels, _))| RefPatch {
            pixels,
            source_rect: Rect::new(i * side as usize, 0, side as usize, side as usize),
            scale: side as usize,
            embedding: Vec::new(),
            category: Category::Outlier,
        })
        .collect();
    (patches, truth, k)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (n(a) * n(b))).max(0.0)
}

/// Average linkage by definition: at every step recompute the mean pairwise
/// distance between every pair of current clusters and merge the closest,
/// ties going to the lexicographically smallest pair of smallest members.
pub fn brute_force_upgma(vectors: &[Vec<f64>], k: usize) -> Partition {
    let mut clusters: Vec<Vec<usize>> = (0..vectors.len()).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += cosine(&vectors[i], &vectors[j]);
                    }
                }
                let d = s / (clusters[a].len() * clusters[b].len()) as f64;
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    clusters.into_iter().map(|c| c.into_iter().collect()).collect()
}

pub fn partition_of(labels: &[usize]) -> Partition {
    let mut groups = std::collections::BTreeMap::<usize, BTreeSet<usize>>::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().insert(i);
    }
    groups.into_values().collect()
}
