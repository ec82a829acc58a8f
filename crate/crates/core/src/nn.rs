//! Named parameter storage and the convolution layer shared by every network.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::arg(format!("duplicate parameter name {name}")));
        }
        self.params.push(Parameter { name, tensor });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_with_prefix<'a>(&'a self, prefixes: &'a [&'a str]) -> impl Iterator<Item = ParamId> + 'a {
        self.iter()
            .filter(move |(_, p)| prefixes.iter().any(|pre| p.name.starts_with(pre)))
            .map(|(id, _)| id)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Put every parameter on `g`; those for which `trainable` holds are
    /// tracked, the rest enter as constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: impl Fn(&str) -> bool) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| g.leaf(p.tensor.clone(), trainable(&p.name)))
                .collect(),
        }
    }

    /// Bind everything as constants (inference).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        self.bind(g, |_| false)
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Handles in store order, one per parameter.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// A copy in which every parameter selected by `which` is re-read from
    /// `store` as a fresh constant.
    pub fn rebind<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, which: impl Fn(&str) -> bool) -> Bound {
        let mut vars = self.vars.clone();
        for (id, p) in store.iter() {
            if which(&p.name) {
                vars[id.0] = g.constant(p.tensor.clone());
            }
        }
        Bound { vars }
    }
}

/// Uniform He initialisation `±√(6 / fan_in)`.
pub fn he_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Square `kernel`, zero bias, He-uniform weights.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            he_uniform(&[out_c, in_c, kernel, kernel], in_c * kernel * kernel, rng),
        )?;
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), Tensor::zeros(&[out_c]))?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            stride,
            pad,
        })
    }

    /// `3×3`, padding 1.
    pub fn same<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(store, name, in_c, out_c, 3, stride, 1, true, rng)
    }

    /// `1×1`, stride 1.
    pub fn pointwise<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(store, name, in_c, out_c, 1, 1, 0, true, rng)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(
            x,
            p.var(self.weight),
            self.bias.map(|b| p.var(b)),
            self.stride,
            self.pad,
        )
    }
}
