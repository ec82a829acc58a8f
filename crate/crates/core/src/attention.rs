//! Correspondence attention: spatial attention of a feature map over a set
//! of reference images, an SE-style channel gate over the attended
//! reference channels, a 1×1 fusion back to the input width, and a residual
//! scale `λ`.
//!
//! With `X` of shape `[1,C,H,W]` and refs `[1,Cr,H,W]`:
//!
//! ```text
//! Q    = flat(conv_q(X))                      [C′, HW]
//! K_i  = flat(conv_k(Ref_i)), V_i likewise    [C′, HW]
//! A_i  = softmax_rows(Qᵀ K_i)                 [HW, HW]
//! Mid  = concat_i (A_i V_iᵀ)ᵀ                 [1, NC′, H, W]
//! W    = σ(W2 gelu(W1 gap(Mid)))              [1, NC′, 1, 1]
//! Out  = X + λ conv_fuse(W ⊙ Mid)
//! ```
//!
//! No `1/√d` temperature is applied to `QᵀK`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{he_uniform, Bound, Conv2d, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CAConfig {
    /// Width `C` of the attended feature map.
    pub channels: usize,
    /// Width `Cr` of each reference (3 for RGB patches).
    pub ref_channels: usize,
    /// Projection width `C′`.
    pub c_prime: usize,
    /// Number of references `N`.
    pub n_refs: usize,
    /// SE reduction `r`; `N·C′` must be divisible by it.
    pub reduction: usize,
}

impl CAConfig {
    pub fn new(channels: usize, n_refs: usize) -> Self {
        CAConfig {
            channels,
            ref_channels: 3,
            c_prime: 16,
            n_refs,
            reduction: 4,
        }
    }

    pub fn mid_channels(&self) -> usize {
        self.n_refs * self.c_prime
    }

    pub fn hidden(&self) -> usize {
        self.mid_channels() / self.reduction
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.ref_channels == 0 || self.c_prime == 0 || self.n_refs == 0 {
            return Err(Error::arg("attention widths and reference count must be positive"));
        }
        if self.reduction == 0 || !self.mid_channels().is_multiple_of(self.reduction) {
            return Err(Error::arg(format!(
                "N·C′ = {} is not divisible by reduction {}",
                self.mid_channels(),
                self.reduction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CAParams {
    pub config: CAConfig,
    pub conv_q: Conv2d,
    pub conv_k: Conv2d,
    pub conv_v: Conv2d,
    /// `[NC′/r, NC′]`.
    pub w1: ParamId,
    /// `[NC′, NC′/r]`.
    pub w2: ParamId,
    pub conv_fuse: Conv2d,
    /// Shape `[1]`, initialised to 0.
    pub lambda: ParamId,
}

/// Graph handles for the intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct CAVars {
    pub out: Var,
    pub mid: Var,
    pub attn_maps: Vec<Var>,
    pub weights: Var,
}

/// Concrete values of one forward pass.
#[derive(Clone, Debug)]
pub struct CATrace<T> {
    pub out: Tensor<T>,
    pub mid: Tensor<T>,
    pub attn_maps: Vec<Tensor<T>>,
    pub weights: Tensor<T>,
}

impl CAParams {
    /// Register the module's parameters under `prefix` (e.g. `"ca"`).
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: CAConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (c, cr, cp) = (config.channels, config.ref_channels, config.c_prime);
        let (mid, hid) = (config.mid_channels(), config.hidden());
        let conv_q = Conv2d::pointwise(store, &format!("{prefix}.conv_q"), c, cp, rng)?;
        let conv_k = Conv2d::pointwise(store, &format!("{prefix}.conv_k"), cr, cp, rng)?;
        let conv_v = Conv2d::pointwise(store, &format!("{prefix}.conv_v"), cr, cp, rng)?;
        let w1 = store.add(format!("{prefix}.w1"), he_uniform(&[hid, mid], mid, rng))?;
        let w2 = store.add(format!("{prefix}.w2"), he_uniform(&[mid, hid], hid, rng))?;
        let conv_fuse = Conv2d::pointwise(store, &format!("{prefix}.conv_fuse"), mid, c, rng)?;
        let lambda = store.add(format!("{prefix}.lambda"), Tensor::zeros(&[1]))?;
        Ok(CAParams {
            config,
            conv_q,
            conv_k,
            conv_v,
            w1,
            w2,
            conv_fuse,
            lambda,
        })
    }

    fn check_inputs<T: Scalar>(&self, g: &Graph<T>, x: Var, refs: &[Var]) -> Result<(usize, usize)> {
        let xs = g.shape(x);
        if xs.len() != 4 || xs[0] != 1 || xs[1] != self.config.channels {
            return Err(Error::dim(format!(
                "attention input must be [1, {}, H, W], got {xs:?}",
                self.config.channels
            )));
        }
        let (h, w) = (xs[2], xs[3]);
        if refs.len() != self.config.n_refs {
            return Err(Error::dim(format!(
                "attention expects {} references, got {}",
                self.config.n_refs,
                refs.len()
            )));
        }
        for (i, &r) in refs.iter().enumerate() {
            let rs = g.shape(r);
            if rs != [1, self.config.ref_channels, h, w] {
                return Err(Error::dim(format!(
                    "reference {i} has shape {rs:?}, expected [1, {}, {h}, {w}]",
                    self.config.ref_channels
                )));
            }
        }
        Ok((h, w))
    }

    /// Returns `Mid` and the per-reference attention maps.
    pub fn spatial_attention<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        refs: &[Var],
    ) -> Result<(Var, Vec<Var>)> {
        let (h, w) = self.check_inputs(g, x, refs)?;
        let cp = self.config.c_prime;
        let q = self.conv_q.forward(g, p, x)?;
        let q = g.flatten_spatial(q)?;
        let qt = g.transpose(q)?;
        let mut mids = Vec::with_capacity(refs.len());
        let mut maps = Vec::with_capacity(refs.len());
        for &r in refs {
            let k = self.conv_k.forward(g, p, r)?;
            let k = g.flatten_spatial(k)?;
            let v = self.conv_v.forward(g, p, r)?;
            let v = g.flatten_spatial(v)?;
            let logits = g.matmul(qt, k)?;
            let attn = g.softmax(logits, 1)?;
            let vt = g.transpose(v)?;
            let m = g.matmul(attn, vt)?;
            let m = g.transpose(m)?;
            mids.push(g.reshape(m, &[1, cp, h, w])?);
            maps.push(attn);
        }
        let mid = g.concat(&mids, 1)?;
        Ok((mid, maps))
    }

    /// Channel gate `[1, NC′, 1, 1]`, every element in `(0, 1)`.
    pub fn channel_weights<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, mid: Var) -> Result<Var> {
        let nc = self.config.mid_channels();
        if g.shape(mid).len() != 4 || g.shape(mid)[1] != nc {
            return Err(Error::dim(format!(
                "channel gate expects {nc} channels, got {:?}",
                g.shape(mid)
            )));
        }
        let z = g.global_avg_pool(mid)?;
        let z = g.reshape(z, &[nc, 1])?;
        let h = g.matmul(p.var(self.w1), z)?;
        let h = g.gelu(h);
        let s = g.matmul(p.var(self.w2), h)?;
        let s = g.sigmoid(s);
        g.reshape(s, &[1, nc, 1, 1])
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, refs: &[Var]) -> Result<CAVars> {
        let (mid, attn_maps) = self.spatial_attention(g, p, x, refs)?;
        let weights = self.channel_weights(g, p, mid)?;
        let gated = g.mul(mid, weights)?;
        let attn = self.conv_fuse.forward(g, p, gated)?;
        let lambda = g.reshape(p.var(self.lambda), &[1, 1, 1, 1])?;
        let scaled = g.mul(attn, lambda)?;
        let out = g.add(x, scaled)?;
        Ok(CAVars {
            out,
            mid,
            attn_maps,
            weights,
        })
    }

    /// Inference-only forward on concrete tensors.
    pub fn trace<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>, refs: &[Tensor<T>]) -> Result<CATrace<T>> {
        let mut g = Graph::new();
        let p = store.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let rv: Vec<Var> = refs.iter().map(|r| g.constant(r.clone())).collect();
        let v = self.forward(&mut g, &p, xv, &rv)?;
        Ok(CATrace {
            out: g.value(v.out).clone(),
            mid: g.value(v.mid).clone(),
            attn_maps: v.attn_maps.iter().map(|&a| g.value(a).clone()).collect(),
            weights: g.value(v.weights).clone(),
        })
    }
}
