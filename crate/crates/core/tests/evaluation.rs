mod support;

use image::{Rgb, RgbImage};
use polyptych_core::evaluation::{evaluate, frechet_feature_distance, frechet_from_embeddings, pix_acc, PIX_ACC_TOL};
use polyptych_core::synth::checker_texture;
use polyptych_core::FeatureExtractor32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::frechet::{frechet_oracle, gaussian};

#[test]
fn frechet_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let d = rng.random_range(2..7);
        let sa: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
        let sb: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
        let a = gaussian(40, d, &sa, 0.0, &mut rng);
        let b = gaussian(30, d, &sb, 0.7, &mut rng);
        let got = frechet_from_embeddings(&a, &b).unwrap();
        let want = frechet_oracle(&a, &b);
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn identical_sets_have_zero_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = gaussian(50, 5, &[1.0, 0.5, 2.0, 1.0, 0.1], 0.3, &mut rng);
    assert!(frechet_from_embeddings(&a, &a).unwrap() <= 1e-8);
    let imgs: Vec<RgbImage> = (0..70)
        .map(|s| checker_texture(32, 32, 4, (s % 4) as u32, 20, s))
        .collect();
    let f = frechet_feature_distance(&imgs, &imgs, &FeatureExtractor32::new()).unwrap();
    assert!(f <= 1e-8, "{f}");
}

#[test]
fn mean_shift_with_equal_covariance_is_squared_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = gaussian(60, 4, &[1.0, 0.3, 0.8, 1.5], 0.0, &mut rng);
    let delta = [0.5, -1.0, 0.25, 2.0];
    let b: Vec<Vec<f64>> = a
        .iter()
        .map(|r| r.iter().zip(&delta).map(|(x, d)| x + d).collect())
        .collect();
    let want: f64 = delta.iter().map(|d| d * d).sum();
    let got = frechet_from_embeddings(&a, &b).unwrap();
    assert!((got - want).abs() <= 0.02 * want, "{got} vs {want}");
}

#[test]
fn frechet_needs_enough_samples() {
    let a = vec![vec![0.0, 1.0]; 2];
    assert!(frechet_from_embeddings(&a, &a).is_err());
    assert!(frechet_from_embeddings(&vec![vec![0.0; 2]; 3], &vec![vec![0.0; 3]; 4]).is_err());
}

#[test]
fn pix_acc_counts_tolerant_matches() {
    let a = checker_texture(16, 16, 4, 0, 10, 1);
    assert_eq!(pix_acc(&a, &a, PIX_ACC_TOL).unwrap(), 1.0);
    let mut b = a.clone();
    for x in 0..16 {
        let p = b.get_pixel_mut(x, 0);
        p[1] = p[1].wrapping_add(100);
    }
    // a 16-level change sits exactly on the tolerance and still matches
    let p = b.get_pixel_mut(0, 1);
    p[2] = if p[2] >= 16 { p[2] - 16 } else { p[2] + 16 };
    let acc = pix_acc(&a, &b, PIX_ACC_TOL).unwrap();
    assert!((acc - 240.0 / 256.0).abs() < 1e-12, "{acc}");
    let black = RgbImage::from_pixel(4, 4, Rgb([0, 0, 0]));
    let white = RgbImage::from_pixel(4, 4, Rgb([255, 255, 255]));
    assert_eq!(pix_acc(&black, &white, PIX_ACC_TOL).unwrap(), 0.0);
    assert!(pix_acc(&black, &RgbImage::new(4, 5), PIX_ACC_TOL).is_err());
}

#[test]
fn report_marks_unavailable_metrics() {
    let imgs: Vec<RgbImage> = (0..4).map(|s| checker_texture(16, 16, 4, 0, 5, s)).collect();
    let r = evaluate(&imgs, &imgs, &FeatureExtractor32::new()).unwrap();
    assert_eq!(r.pix_acc, Some(1.0));
    assert_eq!(r.frechet, None);
    assert_eq!(r.inception_score, None);
    assert_eq!(r.lpips, None);
    assert_eq!(r.sample_counts.pairs, 4);
}
