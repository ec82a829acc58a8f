//! Training objectives. Functions taking a [`Graph`] record differentiable
//! losses; the plain-tensor versions evaluate the same formulas.
//!
//! The adversarial term is binary cross-entropy on logits, written with
//! softplus so it is finite for any finite logit:
//! `BCE(x, 1) = softplus(−x)`, `BCE(x, 0) = softplus(x)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bandwidth `h` of the contextual affinity.
pub const CX_BANDWIDTH: f64 = 0.5;
/// `ε` in the relative-distance normalisation.
pub const CX_EPS: f64 = 1e-5;
/// Added under the square root when L2-normalising feature vectors.
const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Default for LossWeights {
    /// GAN 0.1, contextual 1.0, L1 10.0.
    fn default() -> Self {
        LossWeights {
            mu1: 0.1,
            mu2: 1.0,
            mu3: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.mu1, self.mu2, self.mu3]
            .iter()
            .all(|m| m.is_finite() && *m >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::arg("loss weights must be finite and non-negative"))
        }
    }
}

/// Discriminator loss `mean BCE(real, 1) + mean BCE(fake, 0)`.
pub fn gan_d<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var) -> Result<Var> {
    if g.shape(real) != g.shape(fake) {
        return Err(Error::dim(format!(
            "logit grids differ: {:?} vs {:?}",
            g.shape(real),
            g.shape(fake)
        )));
    }
    let nr = g.neg(real);
    let a = g.softplus(nr);
    let a = g.mean(a);
    let b = g.softplus(fake);
    let b = g.mean(b);
    g.add(a, b)
}

/// Non-saturating generator loss `mean BCE(fake, 1)`.
pub fn gan_g<T: Scalar>(g: &mut Graph<T>, fake: Var) -> Var {
    let n = g.neg(fake);
    let s = g.softplus(n);
    g.mean(s)
}

/// Contextual loss between `[1, C, h, w]` feature maps (sizes may differ).
///
/// Rows index generated locations `i`, columns real locations `j`. Both sets
/// are centred on the real-feature mean and L2-normalised; `d` is the cosine
/// distance, `d̃ = d / (minⱼ d + ε)`, `w = exp((1 − d̃)/h)` normalised over
/// `j`, and `loss = −ln(meanⱼ maxᵢ CX)`.
pub fn contextual<T: Scalar>(g: &mut Graph<T>, generated: Var, real: Var) -> Result<Var> {
    let (gs, rs) = (g.shape(generated).to_vec(), g.shape(real).to_vec());
    if gs.len() != 4 || rs.len() != 4 || gs[0] != 1 || rs[0] != 1 || gs[1] != rs[1] {
        return Err(Error::dim(format!(
            "contextual loss needs [1,C,h,w] maps with equal C, got {gs:?} and {rs:?}"
        )));
    }
    let (ng, nr) = (gs[2] * gs[3], rs[2] * rs[3]);
    if ng == 0 || nr == 0 || gs[1] == 0 {
        return Err(Error::dim("contextual loss on an empty feature map"));
    }
    let x = g.flatten_spatial(generated)?;
    let x = g.transpose(x)?;
    let y = g.flatten_spatial(real)?;
    let y = g.transpose(y)?;
    let mu = g.sum_axis(y, 0)?;
    let mu = g.scale(mu, T::lit(1.0 / nr as f64));
    let xc = g.sub(x, mu)?;
    let yc = g.sub(y, mu)?;
    let xn = normalize_rows(g, xc)?;
    let yn = normalize_rows(g, yc)?;
    let ynt = g.transpose(yn)?;
    let sim = g.matmul(xn, ynt)?;
    let d = g.neg(sim);
    let d = g.add_scalar(d, T::one());
    let d = g.clamp_min(d, T::zero());
    let dmin = g.min_axis(d, 1)?;
    let dmin = g.add_scalar(dmin, T::lit(CX_EPS));
    let dt = g.div(d, dmin)?;
    let e = g.neg(dt);
    let e = g.add_scalar(e, T::one());
    let e = g.scale(e, T::lit(1.0 / CX_BANDWIDTH));
    let w = g.exp(e);
    let ws = g.sum_axis(w, 1)?;
    let cx = g.div(w, ws)?;
    let best = g.max_axis(cx, 0)?;
    let mean = g.mean(best);
    let ln = g.ln(mean);
    Ok(g.neg(ln))
}

fn normalize_rows<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let sq = g.mul(x, x)?;
    let ss = g.sum_axis(sq, 1)?;
    let ss = g.add_scalar(ss, T::lit(NORM_EPS));
    let norm = g.sqrt(ss);
    g.div(x, norm)
}

/// Mean absolute difference.
pub fn l1<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    g.l1(a, b)
}

/// `μ1·gan + μ2·cx + μ3·l1`.
pub fn objective<T: Scalar>(g: &mut Graph<T>, gan: Var, cx: Var, l1: Var, w: &LossWeights) -> Result<Var> {
    let a = g.scale(gan, T::lit(w.mu1));
    let b = g.scale(cx, T::lit(w.mu2));
    let c = g.scale(l1, T::lit(w.mu3));
    let ab = g.add(a, b)?;
    g.add(ab, c)
}

/// `(loss_d, loss_g)` for concrete logit grids.
pub fn gan_loss<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<(T, T)> {
    let mut g = Graph::new();
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let d = gan_d(&mut g, r, f)?;
    let gl = gan_g(&mut g, f);
    Ok((g.value(d).item()?, g.value(gl).item()?))
}

pub fn contextual_loss<T: Scalar>(generated: &Tensor<T>, real: &Tensor<T>) -> Result<T> {
    let mut g = Graph::new();
    let a = g.constant(generated.clone());
    let b = g.constant(real.clone());
    let l = contextual(&mut g, a, b)?;
    g.value(l).item()
}

pub fn l1_loss<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    let mut g = Graph::new();
    let a = g.constant(a.clone());
    let b = g.constant(b.clone());
    let l = g.l1(a, b)?;
    g.value(l).item()
}

pub fn full_objective(gan: f64, cx: f64, l1: f64, w: &LossWeights) -> f64 {
    w.mu1 * gan + w.mu2 * cx + w.mu3 * l1
}
