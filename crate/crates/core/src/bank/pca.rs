use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Projection {
    /// One row per input vector, `dims` columns.
    pub points: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept directions, descending.
    pub variances: Vec<f64>,
    /// Unit principal directions, one per kept component.
    pub directions: Vec<Vec<f64>>,
}

/// Mean-centred projection onto the top `dims` principal directions.
///
/// Directions are sign-normalised so their largest-magnitude coordinate is
/// positive. Rank-deficient input yields (near) zero trailing components.
pub fn pca_project<T: Scalar>(embeddings: &[Vec<T>], dims: usize) -> Result<Projection> {
    let n = embeddings.len();
    if n < dims + 1 {
        return Err(Error::arg(format!(
            "PCA to {dims} dims needs at least {} vectors, got {n}",
            dims + 1
        )));
    }
    let d = embeddings[0].len();
    if dims > d || embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::dim(format!("PCA: ragged or too-short vectors for {dims} dims")));
    }
    let x = DMatrix::from_fn(n, d, |i, j| embeddings[i][j].as_f64());
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut directions = Vec::with_capacity(dims);
    let mut variances = Vec::with_capacity(dims);
    for &k in order.iter().take(dims) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        directions.push(v);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    let points = (0..n)
        .map(|i| {
            directions
                .iter()
                .map(|dir| (0..d).map(|j| centred[(i, j)] * dir[j]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        points,
        variances,
        directions,
    })
}
