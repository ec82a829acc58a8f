//! Central finite-difference checking of recorded gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{CAConfig, CAParams};
use crate::autodiff::{gradient_of, Graph, Var};
use crate::error::Result;
use crate::losses;
use crate::nn::{Bound, ParamStore};
use crate::ops::ResizeMode;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradReport {
    /// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)` per input.
    pub relative_errors: Vec<f64>,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Norm-wise relative error between two gradient arrays. Two (near) zero
/// arrays compare as exact.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Compare the tape gradient of `build` against central differences with the
/// given `step`. `build` receives one tracked var per input and must return a
/// single-element loss.
pub fn check<F>(inputs: &[Tensor<f64>], step: f64, build: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        g.value(loss).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let analytic = gradient_of(&g, loss, &vars)?;

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut relative_errors = Vec::with_capacity(inputs.len());
    for (i, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        relative_errors.push(relative_error(grad.data(), &numeric));
    }
    Ok(GradReport { relative_errors })
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + Send + Sync>;

/// One operation under test: concrete inputs and a loss built from them.
pub struct GradCase {
    pub name: String,
    pub inputs: Vec<Tensor<f64>>,
    build: Build,
}

impl GradCase {
    fn new(
        name: impl Into<String>,
        inputs: Vec<Tensor<f64>>,
        build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        GradCase {
            name: name.into(),
            inputs,
            build: Box::new(build),
        }
    }

    /// An op with a tensor output, reduced by a fixed random weighting so
    /// every output element contributes a distinct share.
    fn probe(
        name: impl Into<String>,
        inputs: Vec<Tensor<f64>>,
        seed: u64,
        op: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, inputs, move |g, v| {
            let y = op(g, v)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let w = g.constant(Tensor::uniform(g.shape(y), -1.0, 1.0, &mut rng));
            let p = g.mul(y, w)?;
            Ok(g.sum(p))
        })
    }

    pub fn run(&self, step: f64) -> Result<GradReport> {
        check(&self.inputs, step, &self.build)
    }
}

fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Entries spaced at least 0.2 apart, so max/min winners are stable under
/// small perturbations.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    Tensor::from_fn(shape, |i| {
        ranks[i] as f64 * 0.3 + rng.random_range(-0.05..0.05) - 0.15 * n as f64
    })
}

/// Every differentiable operation of the graph, plus the composite losses
/// and the full attention module, with inputs drawn from `seed`.
pub fn suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let u = |shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng| Tensor::<f64>::uniform(shape, lo, hi, r);
    let mut cases = Vec::new();

    for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 0, 2)] {
        let x = u(&[1, 2, 5, 5], -1.0, 1.0, r);
        let w = u(&[3, 2, k, k], -1.0, 1.0, r);
        let b = u(&[3], -1.0, 1.0, r);
        cases.push(GradCase::probe(
            format!("conv2d k{k} s{stride} p{pad}"),
            vec![x, w, b],
            seed,
            move |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad),
        ));
    }
    cases.push(GradCase::probe(
        "conv2d no bias",
        vec![u(&[1, 2, 4, 4], -1.0, 1.0, r), u(&[2, 2, 3, 3], -1.0, 1.0, r)],
        seed,
        |g, v| g.conv2d(v[0], v[1], None, 1, 1),
    ));
    cases.push(GradCase::probe(
        "matmul",
        vec![u(&[3, 4], -1.0, 1.0, r), u(&[4, 2], -1.0, 1.0, r)],
        seed,
        |g, v| g.matmul(v[0], v[1]),
    ));
    cases.push(GradCase::probe(
        "transpose",
        vec![u(&[3, 5], -1.0, 1.0, r)],
        seed,
        |g, v| g.transpose(v[0]),
    ));

    let pair = |r: &mut ChaCha8Rng| {
        vec![
            Tensor::<f64>::uniform(&[2, 3, 4], -1.0, 1.0, r),
            Tensor::uniform(&[1, 3, 1], -1.0, 1.0, r),
        ]
    };
    cases.push(GradCase::probe("add broadcast", pair(r), seed, |g, v| {
        g.add(v[0], v[1])
    }));
    cases.push(GradCase::probe("sub broadcast", pair(r), seed, |g, v| {
        g.sub(v[1], v[0])
    }));
    cases.push(GradCase::probe("mul broadcast", pair(r), seed, |g, v| {
        g.mul(v[0], v[1])
    }));
    cases.push(GradCase::probe(
        "div broadcast",
        vec![u(&[2, 3, 4], -1.0, 1.0, r), u(&[1, 3, 1], 0.5, 2.0, r)],
        seed,
        |g, v| g.div(v[0], v[1]),
    ));
    cases.push(GradCase::probe(
        "mul same shape",
        vec![u(&[3, 4], -1.0, 1.0, r), u(&[3, 4], -1.0, 1.0, r)],
        seed,
        |g, v| g.mul(v[0], v[1]),
    ));

    let sh = [2, 3, 4];
    type Unary = fn(&mut Graph<f64>, Var) -> Var;
    let smooth: [(&str, Unary); 7] = [
        ("neg", |g, x| g.neg(x)),
        ("exp", |g, x| g.exp(x)),
        ("tanh", |g, x| g.tanh(x)),
        ("gelu", |g, x| g.gelu(x)),
        ("sigmoid", |g, x| g.sigmoid(x)),
        ("softplus", |g, x| g.softplus(x)),
        ("scale", |g, x| g.scale(x, -1.7)),
    ];
    for (name, f) in smooth {
        cases.push(GradCase::probe(name, vec![u(&sh, -2.0, 2.0, r)], seed, move |g, v| {
            Ok(f(g, v[0]))
        }));
    }
    cases.push(GradCase::probe(
        "add_scalar",
        vec![u(&sh, -2.0, 2.0, r)],
        seed,
        |g, v| Ok(g.add_scalar(v[0], 0.3)),
    ));
    let positive: [(&str, Unary); 2] = [("ln", |g, x| g.ln(x)), ("sqrt", |g, x| g.sqrt(x))];
    for (name, f) in positive {
        cases.push(GradCase::probe(name, vec![u(&sh, 0.5, 2.0, r)], seed, move |g, v| {
            Ok(f(g, v[0]))
        }));
    }
    let kinked: [(&str, Unary); 3] = [
        ("abs", |g, x| g.abs(x)),
        ("leaky_relu", |g, x| g.leaky_relu(x, 0.2)),
        ("clamp_min", |g, x| g.clamp_min(x, 0.0)),
    ];
    for (name, f) in kinked {
        cases.push(GradCase::probe(
            name,
            vec![away_from_zero(&sh, r)],
            seed,
            move |g, v| Ok(f(g, v[0])),
        ));
    }

    for axis in 0..3 {
        cases.push(GradCase::probe(
            format!("softmax axis {axis}"),
            vec![u(&sh, -2.0, 2.0, r)],
            seed,
            move |g, v| g.softmax(v[0], axis),
        ));
        cases.push(GradCase::probe(
            format!("sum_axis {axis}"),
            vec![u(&sh, -1.0, 1.0, r)],
            seed,
            move |g, v| g.sum_axis(v[0], axis),
        ));
        cases.push(GradCase::probe(
            format!("max_axis {axis}"),
            vec![distinct(&sh, r)],
            seed,
            move |g, v| g.max_axis(v[0], axis),
        ));
        cases.push(GradCase::probe(
            format!("min_axis {axis}"),
            vec![distinct(&sh, r)],
            seed,
            move |g, v| g.min_axis(v[0], axis),
        ));
    }
    cases.push(GradCase::new("sum", vec![u(&sh, -1.0, 1.0, r)], |g, v| {
        let s = g.sum(v[0]);
        g.mul(s, s)
    }));
    cases.push(GradCase::new("mean", vec![u(&sh, -1.0, 1.0, r)], |g, v| {
        let s = g.mean(v[0]);
        Ok(g.exp(s))
    }));
    cases.push(GradCase::probe(
        "global_avg_pool",
        vec![u(&[1, 3, 3, 4], -1.0, 1.0, r)],
        seed,
        |g, v| g.global_avg_pool(v[0]),
    ));
    for (mode, name) in [(ResizeMode::Nearest, "nearest"), (ResizeMode::Bilinear, "bilinear")] {
        for (oh, ow) in [(8, 6), (2, 3), (5, 7)] {
            cases.push(GradCase::probe(
                format!("resize {name} 4x3→{oh}x{ow}"),
                vec![u(&[1, 2, 4, 3], -1.0, 1.0, r)],
                seed,
                move |g, v| g.resize(v[0], oh, ow, mode),
            ));
        }
    }
    cases.push(GradCase::probe("reshape", vec![u(&sh, -1.0, 1.0, r)], seed, |g, v| {
        g.reshape(v[0], &[4, 6])
    }));
    cases.push(GradCase::probe(
        "flatten_spatial",
        vec![u(&[1, 2, 3, 2], -1.0, 1.0, r)],
        seed,
        |g, v| g.flatten_spatial(v[0]),
    ));
    for axis in 0..2 {
        cases.push(GradCase::probe(
            format!("concat axis {axis}"),
            vec![
                u(&[2, 3], -1.0, 1.0, r),
                u(&[2, 3], -1.0, 1.0, r),
                u(&[2, 3], -1.0, 1.0, r),
            ],
            seed,
            move |g, v| g.concat(v, axis),
        ));
    }
    cases.push(GradCase::probe(
        "pad2d",
        vec![u(&[1, 2, 3, 2], -1.0, 1.0, r)],
        seed,
        |g, v| g.pad2d(v[0], 1, 2, 0, 1),
    ));
    let a = u(&sh, -1.0, 1.0, r);
    let gap = away_from_zero(&sh, r);
    let b = Tensor::new(&sh, a.data().iter().zip(gap.data()).map(|(x, d)| x + d).collect())?;
    cases.push(GradCase::new("l1", vec![a, b], |g, v| g.l1(v[0], v[1])));

    cases.push(GradCase::new(
        "gan_d",
        vec![u(&[1, 1, 2, 2], -2.0, 2.0, r), u(&[1, 1, 2, 2], -2.0, 2.0, r)],
        |g, v| losses::gan_d(g, v[0], v[1]),
    ));
    cases.push(GradCase::new("gan_g", vec![u(&[1, 1, 2, 2], -2.0, 2.0, r)], |g, v| {
        Ok(losses::gan_g(g, v[0]))
    }));
    cases.push(GradCase::new(
        "contextual",
        vec![u(&[1, 16, 2, 3], -1.0, 1.0, r), u(&[1, 16, 3, 2], -1.0, 1.0, r)],
        |g, v| losses::contextual(g, v[0], v[1]),
    ));

    cases.push(attention_case(r.random(), seed)?);
    Ok(cases)
}

/// The whole attention module with a non-zero residual scale, differentiated
/// with respect to its input, every reference and every parameter.
fn attention_case(init: u64, seed: u64) -> Result<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(init);
    let config = CAConfig {
        channels: 3,
        ref_channels: 3,
        c_prime: 4,
        n_refs: 2,
        reduction: 4,
    };
    let mut store = ParamStore::<f64>::new();
    let ca = CAParams::new(&mut store, "ca", config, &mut rng)?;
    *store.tensor_mut(ca.lambda) = Tensor::new(&[1], vec![rng.random_range(0.5..1.5)])?;
    for id in [ca.conv_q.bias, ca.conv_k.bias, ca.conv_v.bias, ca.conv_fuse.bias]
        .into_iter()
        .flatten()
    {
        let shape = store.get(id).tensor.shape().to_vec();
        *store.tensor_mut(id) = Tensor::uniform(&shape, -0.5, 0.5, &mut rng);
    }
    let mut inputs = vec![Tensor::uniform(&[1, 3, 3, 3], -1.0, 1.0, &mut rng)];
    for _ in 0..config.n_refs {
        inputs.push(Tensor::uniform(&[1, 3, 3, 3], 0.0, 1.0, &mut rng));
    }
    let n_fixed = inputs.len();
    inputs.extend(store.iter().map(|(_, p)| p.tensor.clone()));
    Ok(GradCase::probe(
        "correspondence attention",
        inputs,
        seed,
        move |g, v| {
            let p = Bound::from_vars(v[n_fixed..].to_vec());
            Ok(ca.forward(g, &p, v[0], &v[1..n_fixed])?.out)
        },
    ))
}
