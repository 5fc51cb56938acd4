mod common;

use localdeform::eval::{
    coefficient_covariance, cross_validate, reconstruction_error, sparse_reconstruction, specificity, ErrorPair,
    EvalConfig,
};
use localdeform::graph::{mesh_edges, topology_graph, IncidenceOperator, DEFAULT_THETA};
use localdeform::kernel::kpca;
use localdeform::pca::pca;
use localdeform::prox::RegularizerWeights;
use localdeform::shape::{fit_all, ShapeSet};
use localdeform::solver::{solve, zero_fraction, SolverConfig};
use localdeform::synthetic::{generate, BaseMesh, SyntheticSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_set(seed: u64, vertices: usize, shapes: usize, rank: usize) -> ShapeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = DMatrix::from_fn(3 * vertices, rank, |_, _| rng.random_range(-1.0..1.0))
        * DMatrix::from_fn(rank, shapes, |_, _| rng.random_range(-1.0..1.0));
    let noise = DMatrix::from_fn(3 * vertices, shapes, |_, _| rng.random_range(-0.05..0.05));
    ShapeSet::from_columns(&(low + noise)).unwrap()
}

fn small_planted(seed: u64) -> ShapeSet {
    generate(&SyntheticSpec {
        mesh: BaseMesh::Grid { width: 10, height: 10 },
        regions: 2,
        radius: 2,
        samples: 12,
        seed,
        ..Default::default()
    })
    .unwrap()
    .set
}

#[test]
fn exact_zeros_grow_with_l1_weight() {
    let set = small_planted(0);
    let g = topology_graph(set.mean_shape(), &mesh_edges(set.faces()), DEFAULT_THETA).unwrap();
    let e = IncidenceOperator::new(&g);
    let base = RegularizerWeights::defaults(set.vertex_count(), set.shape_count(), 4, g.edge_count());
    let cfg = SolverConfig {
        factors: 4,
        max_iterations: 30,
        ..Default::default()
    };
    let fractions: Vec<f64> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&s| {
            let w = RegularizerWeights {
                lambda_1: base.lambda_1 * s,
                ..base
            };
            let (f, _) = solve(set.data(), &e, &w, &cfg).unwrap();
            zero_fraction(&f.factors)
        })
        .collect();
    assert!(fractions[0] > 0.0, "{fractions:?}");
    assert!(fractions.windows(2).all(|p| p[1] >= p[0]), "{fractions:?}");
}

proptest! {
    #[test]
    fn max_error_bounds_average(
        pts in proptest::collection::vec(-10.0f64..10.0, 6..60),
        scale in 0.1f64..10.0,
    ) {
        let n = pts.len() / 6 * 3;
        let (x, y) = pts[..2 * n].split_at(n);
        let e = ErrorPair::between(x, y, scale).unwrap();
        prop_assert!(e.avg >= 0.0);
        prop_assert!(e.max >= e.avg - 1e-12);
    }
}

#[test]
fn held_out_error_exceeds_training_error() {
    let (mut held_out, mut in_sample) = (0.0, 0.0);
    for seed in 0..20 {
        let set = toy_set(seed, 12, 10, 4);
        let trainer = |data: &DMatrix<f64>| pca(data, 3);
        let phi = trainer(set.data()).unwrap();
        in_sample += reconstruction_error(&phi, &set)
            .unwrap()
            .iter()
            .map(|e| e.avg)
            .sum::<f64>()
            / 10.0;
        let cv = cross_validate(
            &trainer,
            &set,
            &EvalConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        held_out += cv.generalisation.iter().map(|e| e.avg).sum::<f64>() / cv.generalisation.len() as f64;
    }
    assert!(held_out >= in_sample, "{held_out} < {in_sample}");
}

#[test]
fn sparse_error_approaches_reconstruction() {
    let set = toy_set(3, 40, 20, 5);
    let phi = pca(set.data(), 5).unwrap();
    let cov = coefficient_covariance(&fit_all(&phi, set.data()).unwrap());
    let plain: f64 = reconstruction_error(&phi, &set).unwrap().iter().map(|e| e.avg).sum();
    let mean_err = |fraction: f64| -> f64 {
        (0..10)
            .map(|seed| {
                sparse_reconstruction(&phi, set.data(), &cov, fraction, 1e-9, set.scale(), seed)
                    .unwrap()
                    .iter()
                    .map(|e| e.avg)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 10.0
    };
    let errs: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|&f| mean_err(f)).collect();
    assert!(errs.windows(2).all(|p| p[1] <= p[0]), "{errs:?}");
    assert!((errs[2] - plain).abs() <= 1e-6 * plain, "{errs:?} vs {plain}");
}

#[test]
fn specificity_ignores_shape_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = DMatrix::from_fn(45, 12, |_, _| rng.random_range(-3.0..3.0));
    let set = ShapeSet::from_columns(&raw).unwrap();
    let phi = pca(set.data(), 3).unwrap();
    let mut order: Vec<usize> = (0..12).collect();
    order.shuffle(&mut rng);
    let permuted = ShapeSet::from_columns(&raw.select_columns(&order)).unwrap();
    let a = specificity(&phi, &set, 50, 9).unwrap();
    let b = specificity(&phi, &permuted, 50, 9).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.avg - y.avg).abs() <= 1e-9 && (x.max - y.max).abs() <= 1e-9);
    }
}

#[test]
fn kpca_of_sample_covariance_is_pca() {
    for seed in 0..5 {
        let set = toy_set(seed, 10, 8, 3);
        let x = set.data();
        let cov = x * x.transpose() / 7.0;
        let k = kpca(&cov, 3).unwrap();
        let p = pca(x, 3).unwrap();
        let sine = (&k - &p * (p.transpose() * &k)).svd(false, false).singular_values.max();
        assert!(sine.asin() <= 1e-6, "angle {}", sine.asin());
    }
}

#[test]
fn pca_is_orthonormal_and_reconstructs_best() {
    let set = small_planted(1);
    let phi = pca(set.data(), 4).unwrap();
    assert!((phi.transpose() * &phi - DMatrix::identity(4, 4)).amax() <= 1e-10);
    let g = topology_graph(set.mean_shape(), &mesh_edges(set.faces()), DEFAULT_THETA).unwrap();
    let e = IncidenceOperator::new(&g);
    let w = RegularizerWeights::defaults(set.vertex_count(), set.shape_count(), 4, g.edge_count());
    let cfg = SolverConfig {
        factors: 4,
        max_iterations: 50,
        ..Default::default()
    };
    let (f, _) = solve(set.data(), &e, &w, &cfg).unwrap();
    // Frobenius residual is what PCA minimizes.
    let resid = |p: &DMatrix<f64>| (p * fit_all(p, set.data()).unwrap() - set.data()).norm();
    assert!(resid(&phi) <= resid(&f.factors) + 1e-9);
}
