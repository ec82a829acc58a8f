//! Pixel accuracy and a Fréchet distance over the fixed extractor's pooled
//! tap-4 embeddings. Inception score and LPIPS need pretrained networks and
//! are always reported as absent.

use image::RgbImage;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::imageio::rgb_to_tensor;
use crate::scalar::Scalar;

/// Per-channel tolerance for a pixel to count as matching.
pub const PIX_ACC_TOL: f64 = 16.0 / 255.0;

/// Fraction of pixels whose largest channel deviation is at most `tol`
/// (in `[0, 1]` intensity units).
pub fn pix_acc(a: &RgbImage, b: &RgbImage, tol: f64) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::dim(format!(
            "pix_acc on {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    let n = a.width() as usize * a.height() as usize;
    if n == 0 {
        return Err(Error::dim("pix_acc on empty images"));
    }
    let limit = tol * 255.0 + 1e-9;
    let hits = a
        .pixels()
        .zip(b.pixels())
        .filter(|(p, q)| (0..3).map(|c| p[c].abs_diff(q[c])).max().unwrap_or(0) as f64 <= limit)
        .count();
    Ok(hits as f64 / n as f64)
}

fn moments(set: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let x = DMatrix::from_fn(n, d, |i, j| set[i][j]);
    let mean = x.row_mean().transpose();
    let c = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = c.transpose() * &c / (n as f64 - 1.0);
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * s * eig.eigenvectors.transpose()
}

/// `‖μA − μB‖² + tr(ΣA + ΣB − 2 (ΣA ΣB)^{1/2})`, floored at 0.
///
/// `tr (ΣA ΣB)^{1/2}` is the sum of square roots of the eigenvalues of the
/// symmetric matrix `ΣA^{1/2} ΣB ΣA^{1/2}`; negative eigenvalues are clamped
/// to 0. Each set needs more vectors than dimensions.
pub fn frechet_from_embeddings(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let d = a.first().map_or(0, Vec::len);
    if d == 0 || a.iter().chain(b).any(|v| v.len() != d) {
        return Err(Error::dim("Fréchet distance needs non-empty embeddings of one length"));
    }
    if a.len() < d + 1 || b.len() < d + 1 {
        return Err(Error::arg(format!(
            "Fréchet distance in {d} dims needs at least {} samples per set, got {} and {}",
            d + 1,
            a.len(),
            b.len()
        )));
    }
    let (ma, ca) = moments(a, d);
    let (mb, cb) = moments(b, d);
    let ra = sym_sqrt(&ca);
    let s = &ra * &cb * &ra;
    let eig = SymmetricEigen::new((&s + s.transpose()) * 0.5);
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let dist = (&ma - &mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
    Ok(dist.max(0.0))
}

pub fn embed_set<T: Scalar>(images: &[RgbImage], extractor: &FeatureExtractor<T>) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| {
            let v = extractor.pooled_tap4(&rgb_to_tensor::<T>(img))?;
            Ok(v.into_iter().map(Scalar::as_f64).collect())
        })
        .collect()
}

/// Fréchet distance between pooled tap-4 embeddings (64 dims) of two sets.
pub fn frechet_feature_distance<T: Scalar>(
    set_a: &[RgbImage],
    set_b: &[RgbImage],
    extractor: &FeatureExtractor<T>,
) -> Result<f64> {
    frechet_from_embeddings(&embed_set(set_a, extractor)?, &embed_set(set_b, extractor)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub real: usize,
    pub fake: usize,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean over paired images; `None` when no pair has matching dimensions.
    pub pix_acc: Option<f64>,
    /// `None` when either set is too small for the covariance estimate.
    pub frechet: Option<f64>,
    pub inception_score: Option<f64>,
    pub lpips: Option<f64>,
    pub sample_counts: SampleCounts,
    pub notes: Vec<String>,
}

/// Pix-Acc over index-paired images and the Fréchet distance over both sets.
pub fn evaluate<T: Scalar>(
    real: &[RgbImage],
    fake: &[RgbImage],
    extractor: &FeatureExtractor<T>,
) -> Result<MetricReport> {
    let mut notes = vec!["inception score and LPIPS are not computed".to_string()];
    let mut accs = Vec::new();
    for (a, b) in real.iter().zip(fake) {
        if a.dimensions() == b.dimensions() {
            accs.push(pix_acc(a, b, PIX_ACC_TOL)?);
        }
    }
    let pairs = accs.len();
    if pairs < real.len().min(fake.len()) {
        notes.push(format!(
            "{} pairs skipped for mismatched sizes",
            real.len().min(fake.len()) - pairs
        ));
    }
    let pix_acc = (pairs > 0).then(|| accs.iter().sum::<f64>() / pairs as f64);
    let frechet = match frechet_feature_distance(real, fake, extractor) {
        Ok(f) => Some(f),
        Err(Error::InvalidArgument(msg)) => {
            notes.push(msg);
            None
        }
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        pix_acc,
        frechet,
        inception_score: None,
        lpips: None,
        sample_counts: SampleCounts {
            real: real.len(),
            fake: fake.len(),
            pairs,
        },
        notes,
    })
}
