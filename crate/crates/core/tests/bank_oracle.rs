mod support;

use polyptych_core::bank::{build_bank, embed_patch, Category, Rect, RefPatch};
use polyptych_core::FeatureExtractor32;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::bank::{brute_force_upgma, fixture, partition_of, population, Partition};

#[test]
fn bank_partition_matches_brute_force_clustering() {
    let extractor = FeatureExtractor32::new();
    for seed in 0..10 {
        let (patches, truth, k) = fixture(seed);
        assert!(patches.len() <= 20);
        let vectors: Vec<Vec<f64>> = patches
            .iter()
            .map(|p| {
                embed_patch(&p.pixels, &extractor)
                    .unwrap()
                    .into_iter()
                    .map(f64::from)
                    .collect()
            })
            .collect();
        let oracle = brute_force_upgma(&vectors, k);
        let bank = build_bank(patches, &extractor, k, 1).unwrap();
        let got: Partition = bank.members().into_iter().map(|m| m.into_iter().collect()).collect();
        assert_eq!(bank.k, k);
        assert_eq!(got, oracle, "fixture {seed}");
        assert_eq!(got, partition_of(&truth), "fixture {seed} is not separable");
    }
}

#[test]
fn small_clusters_become_outliers() {
    let extractor = FeatureExtractor32::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let patches: Vec<RefPatch> = (0..7)
        .map(|i| RefPatch {
            pixels: population(if i == 6 { 2 } else { i % 2 }, 8, &mut rng),
            source_rect: Rect::new(8 * i, 0, 8, 8),
            scale: 8,
            embedding: Vec::new(),
            category: Category::Outlier,
        })
        .collect();
    let bank = build_bank(patches, &extractor, 3, 2).unwrap();
    assert_eq!(bank.k, 2);
    assert_eq!(bank.outlier_count(), 1);
    assert_eq!(bank.patches[6].category, Category::Outlier);
    let members = bank.members();
    assert_eq!(members[0], vec![0, 2, 4]);
    assert_eq!(members[1], vec![1, 3, 5]);
}
