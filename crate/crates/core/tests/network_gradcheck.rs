//! The assembled network (full layer stack, dropout off, 64-bit) against
//! central differences on 12×12 inputs.

use graphodex_core::model::{build_network, ArchConfig, GradCheckNet};
use graphodex_core::tensor::gradient_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn batch(seed: u64, n: usize) -> Vec<(Vec<f64>, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n)
        .map(|i| ((0..144).map(|_| rng.gen_range(0.0..1.0)).collect(), (i % 2) as u8))
        .collect()
}

fn narrow() -> ArchConfig {
    ArchConfig {
        conv_filters: vec![4, 6, 4, 6],
        dense_units: 8,
        ..ArchConfig::default()
    }
    .with_input(12, 12)
    .without_dropout()
}

#[test]
fn every_coordinate_over_twenty_seeds() {
    let (mut checked, mut kinks) = (0, 0);
    for seed in 0..20 {
        let mut net = GradCheckNet {
            params: build_network::<f64>(narrow(), seed).unwrap(),
            dropout_enabled: false,
        };
        let report = gradient_check(&mut net, &batch(seed, 2), TOL, None, seed).unwrap();
        assert!(
            report.passed(),
            "seed {seed}: {:?}",
            report.flagged().collect::<Vec<_>>()
        );
        assert!(report.tensors.iter().all(|t| t.checked > 0), "seed {seed}: {report:?}");
        checked += report.tensors.iter().map(|t| t.checked).sum::<usize>();
        kinks += report.tensors.iter().map(|t| t.kinks).sum::<usize>();
    }
    assert!(kinks * 100 < checked, "{kinks} kinks among {checked} coordinates");
}

#[test]
fn default_widths_sampled() {
    let arch = ArchConfig::default().with_input(12, 12).without_dropout();
    let mut net = GradCheckNet {
        params: build_network::<f64>(arch, 3).unwrap(),
        dropout_enabled: false,
    };
    let report = gradient_check(&mut net, &batch(3, 1), TOL, Some(12), 3).unwrap();
    assert!(report.passed(), "{:?}", report.flagged().collect::<Vec<_>>());
}

#[test]
fn dropout_net_is_refused() {
    let mut net = GradCheckNet {
        params: build_network::<f64>(narrow(), 0).unwrap(),
        dropout_enabled: true,
    };
    assert!(gradient_check(&mut net, &batch(0, 1), TOL, None, 0).is_err());
}

#[test]
fn odd_feature_maps_floor_through_pooling() {
    // 10×14 pools to 5×7, then floors to 2×3.
    let arch = ArchConfig {
        input_height: 10,
        input_width: 14,
        ..narrow()
    };
    assert_eq!(arch.feature_dims(), (2, 3, 6));
    for seed in 0..4 {
        let mut net = GradCheckNet {
            params: build_network::<f64>(arch.clone(), seed).unwrap(),
            dropout_enabled: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<(Vec<f64>, u8)> = (0..2)
            .map(|i| ((0..140).map(|_| rng.gen_range(0.0..1.0)).collect(), i as u8))
            .collect();
        let report = gradient_check(&mut net, &batch, TOL, None, seed).unwrap();
        assert!(report.passed(), "seed {seed}: {:?}", report.flagged().collect::<Vec<_>>());
    }
}

#[test]
fn rectangle_patch_network_builds() {
    let arch = ArchConfig::default().with_input(30, 100);
    assert_eq!(arch.feature_dims(), (7, 25, 128));
    let net = build_network::<f32>(arch, 0).unwrap();
    let p = graphodex_core::model::predict_patch(&net, &vec![128u8; 3000]).unwrap();
    assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
}
