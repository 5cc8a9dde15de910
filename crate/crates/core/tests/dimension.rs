use gkm_core::dimension::*;
use gkm_core::synth::planted_linear;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    m.qr().q()
}

fn rotate(points: &[Vec<f64>], q: &DMatrix<f64>) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let v = q * nalgebra::DVector::from_column_slice(p);
            v.iter().copied().collect()
        })
        .collect()
}

fn cloud(n: usize, scales: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| scales.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pca_invariances(seed in any::<u64>(), threshold in 0.5f64..0.99, scale in 0.01f64..100.0) {
        let scales = [5.0, 3.0, 1.0, 0.5, 0.1, 0.01];
        let pts = cloud(80, &scales, seed);
        let base = intrinsic_dimension_pca(&pts, threshold).unwrap();

        let q = random_orthogonal(scales.len(), seed ^ 1);
        let rotated = intrinsic_dimension_pca(&rotate(&pts, &q), threshold).unwrap();
        prop_assert_eq!(rotated.intrinsic_dim, base.intrinsic_dim);

        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x * scale).collect()).collect();
        prop_assert_eq!(intrinsic_dimension_pca(&scaled, threshold).unwrap().intrinsic_dim, base.intrinsic_dim);

        let doubled: Vec<Vec<f64>> = pts.iter().chain(&pts).cloned().collect();
        prop_assert_eq!(intrinsic_dimension_pca(&doubled, threshold).unwrap().intrinsic_dim, base.intrinsic_dim);

        for (a, b) in base.explained_variance.iter().zip(&rotated.explained_variance) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn explained_variance_is_a_monotone_curve(seed in any::<u64>()) {
        let est = intrinsic_dimension_pca(&cloud(30, &[2.0, 1.0, 1.0, 0.3], seed), 0.9).unwrap();
        let ev = &est.explained_variance;
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        prop_assert!((ev.last().unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(ev[est.intrinsic_dim - 1] >= 0.9 - 1e-12);
        if est.intrinsic_dim > 1 {
            prop_assert!(ev[est.intrinsic_dim - 2] < 0.9);
        }
    }

    #[test]
    fn jl_is_monotone(m in 1u64..1_000_000_000, e1 in 0.01f64..0.98, bump in 0.001f64..0.01) {
        let e2 = (e1 + bump).min(0.999);
        let a = jl_min_dimension(JlQuery { m, epsilon: e1 }).unwrap();
        let looser = jl_min_dimension(JlQuery { m, epsilon: e2 }).unwrap();
        let more = jl_min_dimension(JlQuery { m: m + 1, epsilon: e1 }).unwrap();
        prop_assert!(looser <= a);
        prop_assert!(more >= a);
    }
}

#[test]
fn planted_manifolds_recovered() {
    for d in [1, 3, 7] {
        let pts = planted_linear(300, d, 40, 1e-4, d as u64);
        assert_eq!(intrinsic_dimension_pca(&pts, 0.99).unwrap().intrinsic_dim, d);
    }
}

#[test]
fn iterative_path_agrees_with_dense_on_planted_data() {
    let pts = planted_linear(120, 4, 60, 1e-3, 9);
    let dense = intrinsic_dimension_pca(&pts, 0.99).unwrap();
    let iter = intrinsic_dimension_pca_with(&pts, 0.99, PcaOptions { dense_limit: 10 }).unwrap();
    assert_eq!(dense.intrinsic_dim, iter.intrinsic_dim);
    for (a, b) in dense.explained_variance.iter().zip(&iter.explained_variance) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn pca_rejects_bad_input() {
    assert!(intrinsic_dimension_pca(&[], 0.9).is_err());
    assert!(intrinsic_dimension_pca(&[vec![1.0, 2.0]], 0.9).is_err());
    assert!(intrinsic_dimension_pca(&[vec![1.0], vec![2.0]], 0.0).is_err());
    assert!(intrinsic_dimension_pca(&[vec![1.0], vec![2.0, 3.0]], 0.9).is_err());
}
