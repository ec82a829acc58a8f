//! Forward kernels and their adjoints on plain tensors.
//!
//! Convolution follows the cross-correlation convention everywhere (the
//! kernel is not flipped). All reductions accumulate in row-major order so
//! that identical inputs give bit-identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, Strides};
use crate::tensor::Tensor;

/// `√(2/π)`, the inner scale of the tanh GeLU approximation.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh GeLU approximation.
pub const GELU_CUBIC: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Nearest,
    Bilinear,
}

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[batch, in_c, h, w], &[out_c, wc, kh, kw]) = (input, weight) else {
            return Err(Error::dim(format!(
                "conv2d expects rank-4 input and weight, got {input:?} and {weight:?}"
            )));
        };
        if wc != in_c {
            return Err(Error::dim(format!(
                "conv2d: input has {in_c} channels, weight expects {wc}"
            )));
        }
        if stride == 0 {
            return Err(Error::arg("conv2d stride must be ≥ 1"));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::dim(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        Ok(ConvGeom {
            batch,
            in_c,
            h,
            w,
            out_c,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for output `(oy, ox)` and kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }

    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        let n = self.out_len();
        for c in 0..self.in_c {
            let plane = &image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * n;
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            cols[row + oy * self.out_w + ox] = match self.source(oy, ox, ky, kx) {
                                Some((y, x)) => plane[y * self.w + x],
                                None => T::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let n = self.out_len();
        for c in 0..self.in_c {
            let plane = &mut image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * n;
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                plane[y * self.w + x] = plane[y * self.w + x] + cols[row + oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input.shape(), weight.shape(), stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_c] {
            return Err(Error::dim(format!(
                "conv2d bias shape {:?}, expected [{}]",
                b.shape(),
                g.out_c
            )));
        }
    }
    let (n, k) = (g.out_len(), g.patch_len());
    let mut out = vec![T::zero(); g.batch * g.out_c * n];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * n]
    };
    let in_plane = g.in_c * g.h * g.w;
    for b in 0..g.batch {
        let image = &input.data()[b * in_plane..(b + 1) * in_plane];
        let rhs: &[T] = if g.is_pointwise() {
            image
        } else {
            g.im2col(image, &mut cols);
            &cols
        };
        let dst = &mut out[b * g.out_c * n..(b + 1) * g.out_c * n];
        T::gemm_raw(
            g.out_c,
            k,
            n,
            weight.data(),
            Strides::row_major(k),
            rhs,
            Strides::row_major(n),
            dst,
            false,
        );
        if let Some(bias) = bias {
            for (f, row) in dst.chunks_mut(n).enumerate() {
                let bv = bias.data()[f];
                row.iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
    Tensor::new(&[g.batch, g.out_c, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
#[allow(clippy::type_complexity)]
pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input: bool,
    need_weight: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>, Tensor<T>)> {
    let g = ConvGeom::new(input.shape(), weight.shape(), stride, pad)?;
    let (n, k) = (g.out_len(), g.patch_len());
    let in_plane = g.in_c * g.h * g.w;
    let mut gin = need_input.then(|| vec![T::zero(); input.len()]);
    let mut gw = need_weight.then(|| vec![T::zero(); weight.len()]);
    let mut gb = vec![T::zero(); g.out_c];
    let mut cols = vec![T::zero(); k * n];
    for b in 0..g.batch {
        let go = &grad_out.data()[b * g.out_c * n..(b + 1) * g.out_c * n];
        for (f, row) in go.chunks(n).enumerate() {
            gb[f] = gb[f] + row.iter().fold(T::zero(), |a, &v| a + v);
        }
        let image = &input.data()[b * in_plane..(b + 1) * in_plane];
        if let Some(gw) = gw.as_mut() {
            let cols_view: &[T] = if g.is_pointwise() {
                image
            } else {
                g.im2col(image, &mut cols);
                &cols
            };
            // gW += gout · colsᵀ
            T::gemm_raw(
                g.out_c,
                n,
                k,
                go,
                Strides::row_major(n),
                cols_view,
                Strides::transposed(n),
                gw,
                true,
            );
        }
        if let Some(gin) = gin.as_mut() {
            let dst = &mut gin[b * in_plane..(b + 1) * in_plane];
            // gcols = Wᵀ · gout
            if g.is_pointwise() {
                T::gemm_raw(
                    k,
                    g.out_c,
                    n,
                    weight.data(),
                    Strides::transposed(k),
                    go,
                    Strides::row_major(n),
                    dst,
                    true,
                );
            } else {
                T::gemm_raw(
                    k,
                    g.out_c,
                    n,
                    weight.data(),
                    Strides::transposed(k),
                    go,
                    Strides::row_major(n),
                    &mut cols,
                    false,
                );
                g.col2im(&cols, dst);
            }
        }
    }
    Ok((
        gin.map(|d| Tensor::new(input.shape(), d)).transpose()?,
        gw.map(|d| Tensor::new(weight.shape(), d)).transpose()?,
        Tensor::new(&[g.out_c], gb)?,
    ))
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::dim(format!("matmul {m}x{k} · {k2}x{n}")));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm_raw(
        m,
        k,
        n,
        a.data(),
        Strides::row_major(k),
        b.data(),
        Strides::row_major(n),
        &mut out,
        false,
    );
    Tensor::new(&[m, n], out)
}

/// `aᵀ·g` and `g·bᵀ` for `matmul(a, b)` with upstream gradient `g`.
pub(crate) fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, k) = a.dims2()?;
    let (_, n) = b.dims2()?;
    let mut ga = vec![T::zero(); m * k];
    T::gemm_raw(
        m,
        n,
        k,
        g.data(),
        Strides::row_major(n),
        b.data(),
        Strides::transposed(n),
        &mut ga,
        false,
    );
    let mut gb = vec![T::zero(); k * n];
    T::gemm_raw(
        k,
        m,
        n,
        a.data(),
        Strides::transposed(k),
        g.data(),
        Strides::row_major(n),
        &mut gb,
        false,
    );
    Ok((Tensor::new(&[m, k], ga)?, Tensor::new(&[k, n], gb)?))
}

pub fn transpose2d<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, c) = a.dims2()?;
    let src = a.data();
    let mut out = vec![T::zero(); r * c];
    const BLOCK: usize = 32;
    for i0 in (0..r).step_by(BLOCK) {
        for j0 in (0..c).step_by(BLOCK) {
            for i in i0..(i0 + BLOCK).min(r) {
                for j in j0..(j0 + BLOCK).min(c) {
                    out[j * r + i] = src[i * c + j];
                }
            }
        }
    }
    Tensor::new(&[c, r], out)
}

/// `(outer, len, inner)` split of a shape around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stabilised softmax along `axis`.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    if inner == 1 && len > 0 {
        for (row, dst) in src.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                sum = sum + *d;
            }
            let inv = T::one() / sum;
            dst.iter_mut().for_each(|d| *d = *d * inv);
        }
        return Tensor::new(x.shape(), out);
    }
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * len + a) * inner + i;
            let max = (0..len).fold(T::neg_infinity(), |m, a| m.max(src[idx(a)]));
            let mut sum = T::zero();
            for a in 0..len {
                let e = (src[idx(a)] - max).exp();
                out[idx(a)] = e;
                sum = sum + e;
            }
            for a in 0..len {
                out[idx(a)] = out[idx(a)] / sum;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

pub(crate) fn softmax_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = axis_split(y.shape(), axis)?;
    let (yd, gd) = (y.data(), g.data());
    let mut out = vec![T::zero(); yd.len()];
    if inner == 1 && len > 0 {
        for ((yr, gr), dst) in yd
            .chunks_exact(len)
            .zip(gd.chunks_exact(len))
            .zip(out.chunks_exact_mut(len))
        {
            let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&y, &g)| s + y * g);
            for ((d, &y), &g) in dst.iter_mut().zip(yr).zip(gr) {
                *d = y * (g - dot);
            }
        }
        return Tensor::new(y.shape(), out);
    }
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * len + a) * inner + i;
            let dot = (0..len).fold(T::zero(), |s, a| s + yd[idx(a)] * gd[idx(a)]);
            for a in 0..len {
                out[idx(a)] = yd[idx(a)] * (gd[idx(a)] - dot);
            }
        }
    }
    Tensor::new(y.shape(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Max,
    Min,
}

/// Reduction along `axis`, keeping it with length 1. For `Max`/`Min` the
/// winning index (first occurrence) is returned alongside.
pub(crate) fn reduce_axis<T: Scalar>(x: &Tensor<T>, axis: usize, kind: Reduce) -> Result<(Tensor<T>, Vec<usize>)> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    if len == 0 {
        return Err(Error::dim("reduction over an empty axis"));
    }
    let src = x.data();
    let mut out = vec![T::zero(); outer * inner];
    let mut arg = vec![0usize; if kind == Reduce::Sum { 0 } else { outer * inner }];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * len + a) * inner + i;
            let dst = o * inner + i;
            match kind {
                Reduce::Sum => out[dst] = (0..len).fold(T::zero(), |s, a| s + src[idx(a)]),
                Reduce::Max | Reduce::Min => {
                    let mut best = 0;
                    for a in 1..len {
                        let better = match kind {
                            Reduce::Max => src[idx(a)] > src[idx(best)],
                            _ => src[idx(a)] < src[idx(best)],
                        };
                        if better {
                            best = a;
                        }
                    }
                    out[dst] = src[idx(best)];
                    arg[dst] = best;
                }
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = 1;
    Ok((Tensor::new(&shape, out)?, arg))
}

pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h == 0 || w == 0 {
        return Err(Error::dim("global_avg_pool on empty plane"));
    }
    let denom = T::lit((h * w) as f64);
    let data = x
        .data()
        .chunks(h * w)
        .map(|p| p.iter().fold(T::zero(), |s, &v| s + v) / denom)
        .collect();
    Tensor::new(&[b, c, 1, 1], data)
}

/// Shape that two same-rank shapes broadcast to (each dim equal or 1).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("cannot broadcast {a:?} with {b:?}: rank differs")));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(Error::dim(format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

/// For each element of `out_shape`, the flat offset into a tensor of `shape`
/// broadcast to it.
pub(crate) fn broadcast_offsets(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n: usize = out_shape.iter().product();
    if shape == out_shape {
        return (0..n).collect();
    }
    let rank = shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        strides[d] = if shape[d] == 1 { 0 } else { acc };
        acc *= shape[d];
    }
    let mut idx = vec![0usize; rank];
    let mut offsets = Vec::with_capacity(n);
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    offsets
}

pub(crate) fn broadcast_binary<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape(), data);
    }
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let oa = broadcast_offsets(a.shape(), &shape);
    let ob = broadcast_offsets(b.shape(), &shape);
    let data = oa.iter().zip(&ob).map(|(&i, &j)| f(a.data()[i], b.data()[j])).collect();
    Tensor::new(&shape, data)
}

/// Sum a broadcast gradient back down to `shape`.
pub(crate) fn unbroadcast<T: Scalar>(g: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if g.shape() == shape {
        return Ok(g.clone());
    }
    let offsets = broadcast_offsets(shape, g.shape());
    let mut out = vec![T::zero(); shape.iter().product()];
    for (&o, &v) in offsets.iter().zip(g.data()) {
        out[o] = out[o] + v;
    }
    Tensor::new(shape, out)
}

/// Source taps for one output coordinate of a 1-D resize.
#[derive(Clone, Copy, Debug)]
struct Taps {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn resize_taps(input: usize, output: usize, mode: ResizeMode) -> Vec<Taps> {
    (0..output)
        .map(|d| match mode {
            ResizeMode::Nearest => {
                let s = ((d * input) / output).min(input - 1);
                Taps {
                    lo: s,
                    hi: s,
                    frac: 0.0,
                }
            }
            ResizeMode::Bilinear => {
                // align_corners = false: pixel centres map to pixel centres.
                let src = ((d as f64 + 0.5) * input as f64 / output as f64 - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(input - 1);
                let hi = (lo + 1).min(input - 1);
                Taps {
                    lo,
                    hi,
                    frac: src - lo as f64,
                }
            }
        })
        .collect()
}

pub fn resize<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::dim(format!("resize {h}x{w} -> {out_h}x{out_w}")));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let ty = resize_taps(h, out_h, mode);
    let tx = resize_taps(w, out_w, mode);
    let mut out = Vec::with_capacity(b * c * out_h * out_w);
    for plane in x.data().chunks(h * w) {
        for t in &ty {
            let fy = T::lit(t.frac);
            for s in &tx {
                let fx = T::lit(s.frac);
                let v = match mode {
                    ResizeMode::Nearest => plane[t.lo * w + s.lo],
                    ResizeMode::Bilinear => {
                        let top = plane[t.lo * w + s.lo] * (T::one() - fx) + plane[t.lo * w + s.hi] * fx;
                        let bot = plane[t.hi * w + s.lo] * (T::one() - fx) + plane[t.hi * w + s.hi] * fx;
                        top * (T::one() - fy) + bot * fy
                    }
                };
                out.push(v);
            }
        }
    }
    Tensor::new(&[b, c, out_h, out_w], out)
}

pub(crate) fn resize_backward<T: Scalar>(in_shape: &[usize], g: &Tensor<T>, mode: ResizeMode) -> Result<Tensor<T>> {
    let (_, _, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (_, _, out_h, out_w) = g.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(g.clone());
    }
    let ty = resize_taps(h, out_h, mode);
    let tx = resize_taps(w, out_w, mode);
    let mut out = vec![T::zero(); in_shape.iter().product()];
    for (plane, gp) in out.chunks_mut(h * w).zip(g.data().chunks(out_h * out_w)) {
        for (oy, t) in ty.iter().enumerate() {
            let fy = T::lit(t.frac);
            for (ox, s) in tx.iter().enumerate() {
                let gv = gp[oy * out_w + ox];
                match mode {
                    ResizeMode::Nearest => plane[t.lo * w + s.lo] = plane[t.lo * w + s.lo] + gv,
                    ResizeMode::Bilinear => {
                        let fx = T::lit(s.frac);
                        let one = T::one();
                        let mut add = |i: usize, wt: T| plane[i] = plane[i] + gv * wt;
                        add(t.lo * w + s.lo, (one - fy) * (one - fx));
                        add(t.lo * w + s.hi, (one - fy) * fx);
                        add(t.hi * w + s.lo, fy * (one - fx));
                        add(t.hi * w + s.hi, fy * fx);
                    }
                }
            }
        }
    }
    Tensor::new(in_shape, out)
}

/// Concatenate tensors along `axis`; all other dims must agree.
pub fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::arg("concat of zero tensors"))?;
    let rank = first.rank();
    let mut shape = first.shape().to_vec();
    shape[axis] = 0;
    for p in parts {
        if p.rank() != rank
            || p.shape()
                .iter()
                .enumerate()
                .any(|(d, &s)| d != axis && s != first.shape()[d])
        {
            return Err(Error::dim(format!(
                "concat: {:?} incompatible with {:?} on axis {axis}",
                p.shape(),
                first.shape()
            )));
        }
        shape[axis] += p.shape()[axis];
    }
    let (outer, _, inner) = axis_split(first.shape(), axis)?;
    let mut out = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Tensor::new(&shape, out)
}

pub(crate) fn concat_backward<T: Scalar>(g: &Tensor<T>, shapes: &[Vec<usize>], axis: usize) -> Result<Vec<Tensor<T>>> {
    let (outer, _, inner) = axis_split(g.shape(), axis)?;
    let mut parts: Vec<Vec<T>> = shapes.iter().map(|s| Vec::with_capacity(s.iter().product())).collect();
    let mut cursor = 0;
    for _ in 0..outer {
        for (p, s) in parts.iter_mut().zip(shapes) {
            let chunk = s[axis] * inner;
            p.extend_from_slice(&g.data()[cursor..cursor + chunk]);
            cursor += chunk;
        }
    }
    parts.into_iter().zip(shapes).map(|(d, s)| Tensor::new(s, d)).collect()
}

/// Zero-pad the two spatial dims of a rank-4 tensor.
pub fn pad2d<T: Scalar>(x: &Tensor<T>, top: usize, bottom: usize, left: usize, right: usize) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    let (oh, ow) = (h + top + bottom, w + left + right);
    let mut out = vec![T::zero(); b * c * oh * ow];
    for (src, dst) in x.data().chunks(h * w).zip(out.chunks_mut(oh * ow)) {
        for y in 0..h {
            dst[(y + top) * ow + left..(y + top) * ow + left + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    Tensor::new(&[b, c, oh, ow], out)
}

/// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let inner = T::lit(GELU_SQRT_2_OVER_PI) * (x + T::lit(GELU_CUBIC) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let k = T::lit(GELU_SQRT_2_OVER_PI);
    let c = T::lit(GELU_CUBIC);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::lit(3.0) * c * x * x)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (b, c, h, wd) = x.dims4().unwrap();
        let (f, _, kh, kw) = w.dims4().unwrap();
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(&[b, f, oh, ow]);
        for bi in 0..b {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = 0.0;
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let y = (oy * stride + ky) as isize - pad as isize;
                                    let xx = (ox * stride + kx) as isize - pad as isize;
                                    if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                        s += x.at4(bi, ci, y as usize, xx as usize) * w.at4(fi, ci, ky, kx);
                                    }
                                }
                            }
                        }
                        out.data_mut()[((bi * f + fi) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_and_window_sum() {
        let x = Tensor::<f32>::new(&[1, 1, 1, 1], vec![5.0]).unwrap();
        let w = Tensor::<f32>::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &w, None, 1, 0).unwrap().data(), &[5.0]);

        let x = Tensor::<f32>::ones(&[1, 1, 3, 3]);
        let w = Tensor::<f32>::ones(&[1, 1, 3, 3]);
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::uniform(&[1, 2, 5, 5], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        let oracle = conv_oracle(&x, &w, 2, 1);
        assert_eq!(y.shape(), &[1, 3, 3, 3]);
        assert!(y.max_abs_diff(&oracle).unwrap() < 1e-6);
    }

    #[test]
    fn conv_matches_nested_loops_on_all_small_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for b in 1..=2 {
            for c in 1..=4 {
                for hw in [3usize, 5, 8] {
                    for (k, stride, pad) in [(1, 1, 0), (3, 1, 1), (3, 2, 1), (3, 2, 0)] {
                        let x = Tensor::<f64>::uniform(&[b, c, hw, hw], -1.0, 1.0, &mut rng);
                        let w = Tensor::<f64>::uniform(&[2, c, k, k], -1.0, 1.0, &mut rng);
                        let y = conv2d(&x, &w, None, stride, pad).unwrap();
                        assert!(y.max_abs_diff(&conv_oracle(&x, &w, stride, pad)).unwrap() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&Tensor::<f64>::zeros(&[3]), 0).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::<f64>::new(&[2], vec![0.0, 2f64.ln()]).unwrap(), 0).unwrap();
        assert!((s.data()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.data()[1] - 2.0 / 3.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::uniform(&[7], -3.0, 3.0, &mut rng);
        let total: f64 = x.data().iter().map(|v| v.exp()).sum();
        let s = softmax(&x, 0).unwrap();
        for (v, x) in s.data().iter().zip(x.data()) {
            assert!((v - x.exp() / total).abs() < 1e-7);
        }
    }

    #[test]
    fn global_avg_pool_examples() {
        let x = Tensor::<f64>::full(&[1, 1, 3, 2], 2.5);
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.5]);
        let x = Tensor::<f64>::new(&[1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[4.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::uniform(&[2, 3, 4, 4], -1.0, 1.0, &mut rng);
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 1, 1]);
        for b in 0..2 {
            for c in 0..3 {
                let mut s = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        s += x.at4(b, c, i, j);
                    }
                }
                assert!((y.at4(b, c, 0, 0) - s / 16.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn resize_examples() {
        let x = Tensor::<f64>::full(&[1, 1, 2, 2], 0.5);
        let y = resize(&x, 1, 1, ResizeMode::Bilinear).unwrap();
        assert_eq!(y.data(), &[0.5]);
        let x = Tensor::<f64>::full(&[1, 1, 1, 1], 3.0);
        assert_eq!(resize(&x, 2, 2, ResizeMode::Nearest).unwrap().data(), &[3.0; 4]);

        // 4x4 ramp, halved: align-corners-false sampling hits src = 2d + 0.5.
        let x = Tensor::<f64>::from_fn(&[1, 1, 4, 4], |i| i as f64);
        let y = resize(&x, 2, 2, ResizeMode::Bilinear).unwrap();
        let sample = |sy: f64, sx: f64| {
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            let v = |yy: usize, xx: usize| (yy * 4 + xx) as f64;
            (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x0 + 1))
                + fy * ((1.0 - fx) * v(y0 + 1, x0) + fx * v(y0 + 1, x0 + 1))
        };
        for dy in 0..2 {
            for dx in 0..2 {
                let expect = sample(2.0 * dy as f64 + 0.5, 2.0 * dx as f64 + 0.5);
                assert!((y.at4(0, 0, dy, dx) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn nearest_up_then_down_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (h, w) in [(1, 1), (3, 5), (4, 4), (7, 2)] {
            let x = Tensor::<f32>::uniform(&[1, 2, h, w], -1.0, 1.0, &mut rng);
            let up = resize(&x, 2 * h, 2 * w, ResizeMode::Nearest).unwrap();
            let down = resize(&up, h, w, ResizeMode::Nearest).unwrap();
            assert_eq!(down, x);
        }
    }

    #[test]
    fn broadcast_offsets_cover_channel_scaling() {
        let offs = broadcast_offsets(&[1, 2, 1, 1], &[1, 2, 2, 2]);
        assert_eq!(offs, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let offs = broadcast_offsets(&[3, 1], &[3, 2]);
        assert_eq!(offs, vec![0, 0, 1, 1, 2, 2]);
        assert!(broadcast_shape(&[2, 3], &[3, 2]).is_err());
    }

    #[test]
    fn concat_roundtrip() {
        let a = Tensor::<f64>::from_fn(&[1, 2, 2, 2], |i| i as f64);
        let b = Tensor::<f64>::from_fn(&[1, 1, 2, 2], |i| 100.0 + i as f64);
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[1, 3, 2, 2]);
        assert_eq!(&c.data()[8..], b.data());
        let parts = concat_backward(&c, &[a.shape().to_vec(), b.shape().to_vec()], 1).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn activation_constants() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0f64) >= 0.0);
    }
}
