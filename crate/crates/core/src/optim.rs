//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moments for a fixed list of tensors.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn for_shapes<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let m: Vec<Tensor<T>> = shapes.into_iter().map(Tensor::zeros).collect();
        OptimizerState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One update of every `params[i]` from `grads[i]`.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "Adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::dim(format!(
                "Adam: shape mismatch {:?} / {:?} / {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (c1, c2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let bc1 = T::lit(1.0 - cfg.beta1.powf(t));
    let bc2 = T::lit(1.0 - cfg.beta2.powf(t));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + c1 * g[j];
            v[j] = b2 * v[j] + c2 * g[j] * g[j];
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            *x = *x - lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam over a subset of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub ids: Vec<ParamId>,
    pub state: OptimizerState<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, ids: Vec<ParamId>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let state = OptimizerState::for_shapes(ids.iter().map(|&id| store.get(id).tensor.shape()));
        Ok(Adam { config, ids, state })
    }

    /// `grads[i]` belongs to `self.ids[i]`.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        let mut taken: Vec<Tensor<T>> = self
            .ids
            .iter()
            .map(|&id| std::mem::replace(store.tensor_mut(id), Tensor::zeros(&[0])))
            .collect();
        let result = {
            let mut refs: Vec<&mut Tensor<T>> = taken.iter_mut().collect();
            adam_step(&mut refs, grads, &mut self.state, &self.config)
        };
        for (&id, t) in self.ids.iter().zip(taken) {
            *store.tensor_mut(id) = t;
        }
        result
    }
}
