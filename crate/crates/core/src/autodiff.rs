//! Reverse-mode differentiation over a recorded tape.
//!
//! A [`Graph`] appends one node per operation, so node order is already a
//! topological order and the backward sweep is a simple reverse walk. Each
//! graph is single-threaded; independent graphs may live on different threads.

use crate::error::{Error, Result};
use crate::ops::{self, Reduce, ResizeMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum Unary<T> {
    Neg,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
    Gelu,
    Sigmoid,
    Softplus,
    LeakyRelu(T),
    ClampMin(T),
    Scale(T),
    AddScalar,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Matmul(Var, Var),
    Transpose(Var),
    Binary(Var, Var, Binary),
    Unary(Var, Unary<T>),
    Softmax(Var, usize),
    Reduce {
        x: Var,
        axis: usize,
        kind: Reduce,
        arg: Vec<usize>,
    },
    SumAll(Var),
    MeanAll(Var),
    GlobalAvgPool(Var),
    Resize(Var, ResizeMode),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Pad2d {
        x: Var,
        top: usize,
        left: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when `var` does not influence the loss or was not tracked.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

#[derive(Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let value = ops::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, stride, pad }, &inputs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Matmul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = ops::transpose2d(self.value(a))?;
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let f = match kind {
            Binary::Add => |x: T, y: T| x + y,
            Binary::Sub => |x: T, y: T| x - y,
            Binary::Mul => |x: T, y: T| x * y,
            Binary::Div => |x: T, y: T| x / y,
        };
        let value = ops::broadcast_binary(self.value(a), self.value(b), f)?;
        Ok(self.push(value, Op::Binary(a, b, kind), &[a, b]))
    }

    /// Elementwise with same-rank broadcasting (each dim equal or 1).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Div)
    }

    fn unary(&mut self, a: Var, kind: Unary<T>, c: T) -> Var {
        let f = |x: T| match kind {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Abs => x.abs(),
            Unary::Tanh => x.tanh(),
            Unary::Gelu => ops::gelu(x),
            Unary::Sigmoid => ops::sigmoid(x),
            Unary::Softplus => ops::softplus(x),
            Unary::LeakyRelu(s) => {
                if x > T::zero() {
                    x
                } else {
                    x * s
                }
            }
            Unary::ClampMin(m) => x.max(m),
            Unary::Scale(s) => x * s,
            Unary::AddScalar => x + c,
        };
        let value = self.value(a).map(f);
        self.push(value, Op::Unary(a, kind), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Neg, T::zero())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp, T::zero())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Ln, T::zero())
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sqrt, T::zero())
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs, T::zero())
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh, T::zero())
    }

    /// GeLU, tanh approximation (see [`ops::gelu`]).
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Gelu, T::zero())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid, T::zero())
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus, T::zero())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        self.unary(a, Unary::LeakyRelu(slope), T::zero())
    }

    pub fn clamp_min(&mut self, a: Var, min: T) -> Var {
        self.unary(a, Unary::ClampMin(min), T::zero())
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.unary(a, Unary::Scale(s), T::zero())
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Unary::AddScalar, c)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = ops::softmax(self.value(a), axis)?;
        Ok(self.push(value, Op::Softmax(a, axis), &[a]))
    }

    fn reduce(&mut self, x: Var, axis: usize, kind: Reduce) -> Result<Var> {
        let (value, arg) = ops::reduce_axis(self.value(x), axis, kind)?;
        Ok(self.push(value, Op::Reduce { x, axis, kind, arg }, &[x]))
    }

    /// Sum along `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, Reduce::Sum)
    }

    /// Max along `axis`; the gradient routes to the first maximal entry.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, Reduce::Max)
    }

    pub fn min_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, Reduce::Min)
    }

    /// Sum of all elements, as a 0-dimensional tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / T::lit(t.len() as f64));
        self.push(value, Op::MeanAll(x), &[x])
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let value = ops::global_avg_pool(self.value(x))?;
        Ok(self.push(value, Op::GlobalAvgPool(x), &[x]))
    }

    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Var> {
        let value = ops::resize(self.value(x), out_h, out_w, mode)?;
        Ok(self.push(value, Op::Resize(x, mode), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// `[B, C, H, W] → [C, H·W]` for a single-image batch.
    pub fn flatten_spatial(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if b != 1 {
            return Err(Error::dim(format!("flatten_spatial expects batch 1, got {b}")));
        }
        self.reshape(x, &[c, h * w])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let value = ops::concat(&tensors, axis)?;
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), parts))
    }

    pub fn pad2d(&mut self, x: Var, top: usize, bottom: usize, left: usize, right: usize) -> Result<Var> {
        let value = ops::pad2d(self.value(x), top, bottom, left, right)?;
        Ok(self.push(value, Op::Pad2d { x, top, left }, &[x]))
    }

    /// L1 reduction: mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "l1: shape {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let d = self.sub(a, b)?;
        let d = self.abs(d);
        Ok(self.mean(d))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (input, gi) in self.input_grads(node, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match grads[input.0].as_mut() {
                    Some(acc) => {
                        for (a, &b) in acc.data_mut().iter_mut().zip(gi.data()) {
                            *a = *a + b;
                        }
                    }
                    None => grads[input.0] = Some(gi),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn input_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| self.value(v);
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            &Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = ops::conv2d_backward(val(x), val(w), g, stride, pad, needs(x), needs(w))?;
                let mut v = Vec::new();
                if let Some(gx) = gx {
                    v.push((x, gx));
                }
                if let Some(gw) = gw {
                    v.push((w, gw));
                }
                if let Some(b) = b {
                    v.push((b, gb));
                }
                v
            }
            &Op::Matmul(a, b) => {
                let (ga, gb) = ops::matmul_backward(val(a), val(b), g)?;
                vec![(a, ga), (b, gb)]
            }
            &Op::Transpose(a) => vec![(a, ops::transpose2d(g)?)],
            &Op::Binary(a, b, kind) => {
                let (ta, tb) = (val(a), val(b));
                let (ga, gb) = match kind {
                    Binary::Add => (g.clone(), g.clone()),
                    Binary::Sub => (g.clone(), g.map(|v| -v)),
                    Binary::Mul => (
                        ops::broadcast_binary(g, tb, |g, b| g * b)?,
                        ops::broadcast_binary(g, ta, |g, a| g * a)?,
                    ),
                    Binary::Div => {
                        let ga = ops::broadcast_binary(g, tb, |g, b| g / b)?;
                        // −g·a/b² = −(g/b)·(a/b)
                        let ratio = ops::broadcast_binary(ta, tb, |a, b| a / b)?;
                        let gb = ops::broadcast_binary(&ga, &ratio, |q, r| -(q * r))?;
                        (ga, gb)
                    }
                };
                vec![
                    (a, ops::unbroadcast(&ga, ta.shape())?),
                    (b, ops::unbroadcast(&gb, tb.shape())?),
                ]
            }
            &Op::Unary(a, kind) => {
                let x = val(a).data();
                let y = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&g, (&x, &y))| {
                        g * match kind {
                            Unary::Neg => -T::one(),
                            Unary::Exp => y,
                            Unary::Ln => T::one() / x,
                            Unary::Sqrt => T::one() / (T::lit(2.0) * y),
                            Unary::Abs => x.signum(),
                            Unary::Tanh => T::one() - y * y,
                            Unary::Gelu => ops::gelu_grad(x),
                            Unary::Sigmoid => y * (T::one() - y),
                            Unary::Softplus => ops::sigmoid(x),
                            Unary::LeakyRelu(s) => {
                                if x > T::zero() {
                                    T::one()
                                } else {
                                    s
                                }
                            }
                            Unary::ClampMin(m) => {
                                if x > m {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Unary::Scale(s) => s,
                            Unary::AddScalar => T::one(),
                        }
                    })
                    .collect();
                vec![(a, Tensor::new(val(a).shape(), data)?)]
            }
            &Op::Softmax(a, axis) => vec![(a, ops::softmax_backward(&node.value, g, axis)?)],
            Op::Reduce { x, axis, kind, arg } => {
                let shape = val(*x).shape();
                let gx = match kind {
                    Reduce::Sum => {
                        let offs = ops::broadcast_offsets(g.shape(), shape);
                        Tensor::new(shape, offs.iter().map(|&o| g.data()[o]).collect())?
                    }
                    Reduce::Max | Reduce::Min => {
                        let (_, len, inner) = ops::axis_split(shape, *axis)?;
                        let mut d = vec![T::zero(); shape.iter().product()];
                        for (k, (&a, &gv)) in arg.iter().zip(g.data()).enumerate() {
                            let (o, i) = (k / inner, k % inner);
                            d[(o * len + a) * inner + i] = gv;
                        }
                        Tensor::new(shape, d)?
                    }
                };
                vec![(*x, gx)]
            }
            &Op::SumAll(a) => vec![(a, Tensor::full(val(a).shape(), g.data()[0]))],
            &Op::MeanAll(a) => {
                let n = T::lit(val(a).len() as f64);
                vec![(a, Tensor::full(val(a).shape(), g.data()[0] / n))]
            }
            &Op::GlobalAvgPool(a) => {
                let (_, _, h, w) = val(a).dims4()?;
                let n = T::lit((h * w) as f64);
                let mut d = Vec::with_capacity(val(a).len());
                for &gv in g.data() {
                    d.extend(std::iter::repeat_n(gv / n, h * w));
                }
                vec![(a, Tensor::new(val(a).shape(), d)?)]
            }
            &Op::Resize(a, mode) => vec![(a, ops::resize_backward(val(a).shape(), g, mode)?)],
            &Op::Reshape(a) => vec![(a, g.clone().reshape(val(a).shape())?)],
            Op::Concat(parts, axis) => {
                let shapes: Vec<Vec<usize>> = parts.iter().map(|&p| val(p).shape().to_vec()).collect();
                parts
                    .iter()
                    .copied()
                    .zip(ops::concat_backward(g, &shapes, *axis)?)
                    .collect()
            }
            &Op::Pad2d { x, top, left } => {
                let (_, _, h, w) = val(x).dims4()?;
                vec![(x, g.crop(top, left, h, w)?)]
            }
        };
        Ok(out)
    }
}

/// `∂loss/∂p` for each of `params`. Parameters the loss does not depend on
/// get an all-zero gradient.
pub fn gradient_of<T: Scalar>(graph: &Graph<T>, loss: Var, params: &[Var]) -> Result<Vec<Tensor<T>>> {
    let grads = graph.backward(loss)?;
    Ok(params
        .iter()
        .map(|&p| grads.get(p).cloned().unwrap_or_else(|| Tensor::zeros(graph.shape(p))))
        .collect())
}
