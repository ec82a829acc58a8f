mod support;

use polyptych_core::autodiff::{gradient_of, Graph};
use polyptych_core::Tensor;
use support::attention::instance;

#[test]
fn attention_rows_are_distributions() {
    for seed in 0..30 {
        let (store, ca, x, refs) = instance(seed, 0.5);
        let t = ca.trace(&store, &x, &refs).unwrap();
        let hw = x.shape()[2] * x.shape()[3];
        assert_eq!(t.attn_maps.len(), refs.len());
        for a in &t.attn_maps {
            assert_eq!(a.shape(), &[hw, hw]);
            for row in a.data().chunks(hw) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() <= 1e-6, "seed {seed}: row sum {s}");
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }
}

#[test]
fn closed_gate_is_exact_identity() {
    for seed in 0..30 {
        let (store, ca, x, refs) = instance(seed, 0.0);
        let out = ca.trace(&store, &x, &refs).unwrap().out;
        assert_eq!(out.data(), x.data(), "seed {seed}");
    }
}

#[test]
fn channel_gate_is_open_interval() {
    for seed in 0..10 {
        let (store, ca, x, refs) = instance(seed, 1.0);
        let t = ca.trace(&store, &x, &refs).unwrap();
        assert_eq!(t.weights.shape(), &[1, ca.config.mid_channels(), 1, 1]);
        assert!(t.weights.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

fn param_grads(lambda: f64) -> Vec<(String, f64)> {
    let (store, ca, x, refs) = instance(11, lambda);
    let mut g = Graph::new();
    let p = store.bind(&mut g, |_| true);
    let xv = g.constant(x);
    let rv: Vec<_> = refs.into_iter().map(|r| g.constant(r)).collect();
    let out = ca.forward(&mut g, &p, xv, &rv).unwrap().out;
    let sq = g.mul(out, out).unwrap();
    let loss = g.sum(sq);
    let vars: Vec<_> = store.iter().map(|(id, _)| p.var(id)).collect();
    let grads = gradient_of(&g, loss, &vars).unwrap();
    store
        .iter()
        .zip(grads)
        .map(|((_, prm), gr)| (prm.name.clone(), gr.data().iter().map(|v| v.abs()).sum()))
        .collect()
}

#[test]
fn open_gate_trains_every_parameter() {
    for (name, mag) in param_grads(0.8) {
        assert!(mag > 0.0, "{name} received no gradient");
    }
}

#[test]
fn closed_gate_trains_only_the_scale() {
    for (name, mag) in param_grads(0.0) {
        if name == "ca.lambda" {
            assert!(mag > 0.0);
        } else {
            assert_eq!(mag, 0.0, "{name}");
        }
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (store, ca, x, mut refs) = instance(3, 0.0);
    let extra = refs[0].clone();
    refs.push(extra);
    assert!(ca.trace(&store, &x, &refs).is_err());
    refs.truncate(ca.config.n_refs);
    refs[0] = Tensor::zeros(&[1, 3, x.shape()[2] + 1, x.shape()[3]]);
    assert!(ca.trace(&store, &x, &refs).is_err());
}
