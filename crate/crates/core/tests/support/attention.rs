//! Random correspondence-attention instances.

use polyptych_core::attention::{CAConfig, CAParams};
use polyptych_core::nn::ParamStore;
use polyptych_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random shapes and weights with the residual scale fixed to `lambda`.
pub fn instance(seed: u64, lambda: f64) -> (ParamStore<f64>, CAParams, Tensor<f64>, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = CAConfig {
        channels: rng.random_range(1..6),
        ref_channels: 3,
        c_prime: 4,
        n_refs: rng.random_range(1..4),
        reduction: 2,
    };
    let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
    let mut store = ParamStore::new();
    let ca = CAParams::new(&mut store, "ca", config, &mut rng).unwrap();
    *store.tensor_mut(ca.lambda) = Tensor::new(&[1], vec![lambda]).unwrap();
    let x = Tensor::uniform(&[1, config.channels, h, w], -3.0, 3.0, &mut rng);
    let refs = (0..config.n_refs)
        .map(|_| Tensor::uniform(&[1, 3, h, w], 0.0, 1.0, &mut rng))
        .collect();
    (store, ca, x, refs)
}
