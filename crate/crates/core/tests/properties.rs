use approx::assert_relative_eq;
use concept_geometry::concepts::{estimate_direction, project_pairs};
use concept_geometry::intervene::{default_alpha_grid, logit_trajectory, top_k_indices};
use concept_geometry::metric::{
    causal_metric, cip, riesz_map, vocab_covariance, whiten, whiten_matrix, MetricContext,
};
use concept_geometry::model_io::{
    ConceptPairSet, ConceptQuadruple, EmbeddingSet, UnembeddingMatrix,
};
use concept_geometry::probe::{alpha_hat, pair_logit, rank_auc};
use concept_geometry::synthetic::random_gaussian_transform;
use concept_geometry::ConceptDirection;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Random unembeddings with correlated coordinates.
fn random_model(v: usize, d: usize, seed: u64) -> UnembeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix = gaussian(d, d, &mut rng) + DMatrix::identity(d, d) * 2.0;
    UnembeddingMatrix::new(gaussian(v, d, &mut rng) * mix).unwrap()
}

fn context(gamma: &UnembeddingMatrix, ridge: f64) -> MetricContext {
    MetricContext::from_unembeddings(gamma, ridge).unwrap()
}

fn random_pairs(name: &str, v: usize, n: usize, rng: &mut ChaCha8Rng) -> ConceptPairSet {
    let mut pairs = Vec::new();
    while pairs.len() < n {
        let a = rng.random_range(0..v);
        let b = rng.random_range(0..v);
        if a != b && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    ConceptPairSet::new(name, pairs).unwrap()
}

fn transformed(
    gamma: &UnembeddingMatrix,
    a0: &DMatrix<f64>,
    b0: &DVector<f64>,
) -> UnembeddingMatrix {
    let mut m = gamma.matrix() * a0.transpose();
    for mut row in m.row_iter_mut() {
        row += b0.transpose();
    }
    UnembeddingMatrix::new(m).unwrap()
}

#[test]
fn covariance_matches_brute_force_loop() {
    let gamma = random_model(100, 4, 3);
    let (mean, cov) = vocab_covariance(&gamma).unwrap();
    let m = gamma.matrix();
    for i in 0..4 {
        let mu: f64 = (0..100).map(|r| m[(r, i)]).sum::<f64>() / 100.0;
        assert_relative_eq!(mean[i], mu, epsilon = 1e-12);
    }
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for r in 0..100 {
                s += (m[(r, i)] - mean[i]) * (m[(r, j)] - mean[j]);
            }
            assert_relative_eq!(
                cov[(i, j)],
                s / 100.0,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }
}

#[test]
fn metric_context_invariants() {
    let gamma = random_model(300, 6, 4);
    let mc = context(&gamma, 1e-6);
    let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() / m.amax();
    assert!(sym(&mc.cov) < 1e-10);
    assert!(sym(&mc.metric) < 1e-10);
    let sq = &mc.whitening * &mc.whitening;
    assert!((&sq - &mc.metric).norm() / mc.metric.norm() < 1e-8);
    // (cov + ρI)·M = I, so M·cov − I = −ρM
    let resid = (&mc.metric * &mc.cov) - DMatrix::identity(6, 6) + &mc.metric * mc.ridge;
    assert!(resid.amax() < 1e-9, "{}", resid.amax());
    assert!(mc.eigenvalues.iter().all(|&l| l > 0.0));
    assert!(mc.ridge > 0.0);
    let exact = context(&gamma, 0.0);
    assert!(((&exact.metric * &exact.cov) - DMatrix::identity(6, 6)).amax() < 1e-10);
}

#[test]
fn whitened_dot_equals_cip() {
    let gamma = random_model(200, 5, 5);
    let mc = context(&gamma, 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (u, v) = (gaussian_vec(5, &mut rng), gaussian_vec(5, &mut rng));
        let lhs = whiten(&u, &mc).unwrap().dot(&whiten(&v, &mc).unwrap());
        let rhs = cip(&u, &v, &mc).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }
}

#[test]
fn whitening_with_identity_covariance_is_identity() {
    let mc = causal_metric(&DMatrix::identity(3, 3), 0.0).unwrap();
    let m = DMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 - 5.0);
    let twice = whiten_matrix(&whiten_matrix(&m, &mc).unwrap(), &mc).unwrap();
    assert_relative_eq!(twice, m, epsilon = 1e-14);
}

#[test]
fn whitening_is_linear() {
    let gamma = random_model(50, 4, 7);
    let mc = context(&gamma, 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (u, v) = (gaussian_vec(4, &mut rng), gaussian_vec(4, &mut rng));
    let lhs = whiten(&(&u * 2.5 - &v), &mc).unwrap();
    let rhs = whiten(&u, &mc).unwrap() * 2.5 - whiten(&v, &mc).unwrap();
    assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cip_is_bilinear_symmetric_and_positive(
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..8);
        let gamma = random_model(40, d, seed);
        let mc = context(&gamma, 1e-6);
        let (u, v, w) = (gaussian_vec(d, &mut rng), gaussian_vec(d, &mut rng), gaussian_vec(d, &mut rng));
        let scale = mc.metric.amax() * (u.norm() + v.norm() + w.norm()).powi(2);

        let lin = cip(&(&u * a + &v * b), &w, &mc).unwrap();
        let sep = a * cip(&u, &w, &mc).unwrap() + b * cip(&v, &w, &mc).unwrap();
        prop_assert!((lin - sep).abs() <= 1e-10 * scale);

        let uv = cip(&u, &v, &mc).unwrap();
        let vu = cip(&v, &u, &mc).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12 * scale);

        prop_assert!(cip(&u, &u, &mc).unwrap() > 0.0);
        prop_assert_eq!(cip(&DVector::zeros(d), &DVector::zeros(d), &mc).unwrap(), 0.0);
    }

    #[test]
    fn auc_is_invariant_under_increasing_maps(
        a in proptest::collection::vec(-5.0f64..5.0, 1..30),
        b in proptest::collection::vec(-5.0f64..5.0, 1..30),
        scale in 0.01f64..100.0,
    ) {
        let base = rank_auc(&a, &b);
        prop_assert!((0.0..=1.0).contains(&base));
        let map = |x: &f64| (x * scale).exp() + x.powi(3);
        let ma: Vec<f64> = a.iter().map(map).collect();
        let mb: Vec<f64> = b.iter().map(map).collect();
        prop_assert_eq!(rank_auc(&ma, &mb), base);
        let sa: Vec<f64> = a.iter().map(|x| x * scale).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * scale).collect();
        prop_assert_eq!(rank_auc(&sa, &sb), base);
    }

    #[test]
    fn raw_logit_rank_equals_softmax_rank(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rng.random_range(2..60);
        let logits = DVector::from_fn(v, |_, _| rng.random_range(-3i32..4) as f64 * 0.5);
        let max = logits.max();
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let probs = logits.map(|l| (l - max).exp() / z);
        let by_logit: Vec<usize> = top_k_indices(&logits, v).into_iter().map(|t| t.0).collect();
        let by_prob: Vec<usize> = top_k_indices(&probs, v).into_iter().map(|t| t.0).collect();
        prop_assert_eq!(by_logit, by_prob);
    }
}

#[test]
fn positive_scaling_of_diffs_leaves_direction_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gamma = random_model(60, 5, 9);
    let pairs = random_pairs("w", 60, 8, &mut rng);
    let mc = context(&gamma, 1e-6);
    let base = estimate_direction(&gamma, &pairs, &mc).unwrap();
    // scaling every row about the origin scales every diff; the metric is kept fixed
    let scaled = UnembeddingMatrix::new(gamma.matrix() * 3.7).unwrap();
    let other = estimate_direction(&scaled, &pairs, &mc).unwrap();
    assert_relative_eq!(base.gamma_bar, other.gamma_bar, epsilon = 1e-12);
}

#[test]
fn pair_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let gamma = random_model(60, 5, 10);
    let pairs = random_pairs("w", 60, 9, &mut rng);
    let mc = context(&gamma, 1e-6);
    let base = estimate_direction(&gamma, &pairs, &mc).unwrap();
    let mut shuffled = pairs.pairs.clone();
    shuffled.reverse();
    shuffled.swap(0, 4);
    let other =
        estimate_direction(&gamma, &ConceptPairSet::new("w", shuffled).unwrap(), &mc).unwrap();
    assert_relative_eq!(base.gamma_bar, other.gamma_bar, epsilon = 1e-12);
    assert_eq!(base.n_pairs, other.n_pairs);
}

#[test]
fn reversing_every_pair_negates_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gamma = random_model(60, 5, 11);
    let pairs = random_pairs("w", 60, 7, &mut rng);
    let mc = context(&gamma, 1e-6);
    let base = estimate_direction(&gamma, &pairs, &mc).unwrap();
    let flipped = estimate_direction(&gamma, &pairs.reversed(), &mc).unwrap();
    assert_eq!(flipped.gamma_bar, -&base.gamma_bar);
    assert_eq!(flipped.lambda_bar, -&base.lambda_bar);
}

#[test]
fn direction_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let gamma = random_model(80, 6, 12);
    let mc = context(&gamma, 1e-6);
    let dir = estimate_direction(&gamma, &random_pairs("w", 80, 10, &mut rng), &mc).unwrap();
    assert_relative_eq!(
        cip(&dir.gamma_bar, &dir.gamma_bar, &mc).unwrap(),
        1.0,
        epsilon = 1e-8
    );
    assert_eq!(dir.lambda_bar, riesz_map(&dir.gamma_bar, &mc).unwrap());
    let ratio = dir.raw_mean.dot(&dir.gamma_bar) / dir.gamma_bar.norm_squared();
    assert!(ratio > 0.0);
    assert_relative_eq!(dir.raw_mean, &dir.gamma_bar * ratio, epsilon = 1e-12);
}

#[test]
fn reparameterization_preserves_cip_riesz_and_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let gamma = random_model(120, 6, 13);
    let sets: Vec<ConceptPairSet> = (0..3)
        .map(|i| random_pairs(&format!("c{i}"), 120, 10, &mut rng))
        .collect();
    let mc = context(&gamma, 0.0);
    let dirs: Vec<ConceptDirection> = sets
        .iter()
        .map(|s| estimate_direction(&gamma, s, &mc).unwrap())
        .collect();

    for _ in 0..5 {
        let (a0, b0) = random_gaussian_transform(6, 100.0, &mut rng);
        let moved = transformed(&gamma, &a0, &b0);
        let mc2 = context(&moved, 0.0);
        let dual = a0.clone().try_inverse().unwrap().transpose();
        for (s, d) in sets.iter().zip(&dirs) {
            let d2 = estimate_direction(&moved, s, &mc2).unwrap();
            let expected = &dual * &d.lambda_bar;
            assert!((&d2.lambda_bar - &expected).norm() <= 1e-6 * expected.norm());
            let p1 = project_pairs(&gamma, s, &mc).unwrap();
            let p2 = project_pairs(&moved, s, &mc2).unwrap();
            let scale = p1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (x, y) in p1.iter().zip(&p2) {
                assert!((x - y).abs() <= 1e-6 * scale);
            }
        }
        for a in &dirs {
            for b in &dirs {
                let before = cip(&a.raw_mean, &b.raw_mean, &mc).unwrap();
                let after = cip(&(&a0 * &a.raw_mean), &(&a0 * &b.raw_mean), &mc2).unwrap();
                assert!((before - after).abs() <= 1e-6 * before.abs().max(1e-3));
            }
        }
    }
}

#[test]
fn pair_logit_matches_brute_force_softmax_on_small_vocab() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let gamma = gaussian(10, 4, &mut rng);
    let model = UnembeddingMatrix::new(gamma.clone()).unwrap();
    for _ in 0..20 {
        let lambda = gaussian_vec(4, &mut rng);
        let logits = &gamma * &lambda;
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let p: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
        for id1 in 0..10 {
            for id0 in 0..10 {
                let expected =
                    (p[id1] / (p[id0] + p[id1])).ln() - (p[id0] / (p[id0] + p[id1])).ln();
                let got = pair_logit(&lambda, &model, id1, id0).unwrap();
                assert!((got - expected).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn target_slope_is_alpha_hat() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let gamma = random_model(40, 5, 15);
    let mc = context(&gamma, 0.0);
    let dir = estimate_direction(&gamma, &random_pairs("w", 40, 6, &mut rng), &mc).unwrap();
    let quad = ConceptQuadruple::new("w", "z", [3, 7, 11, 19]).unwrap();
    let contexts = EmbeddingSet::new(gaussian(4, 5, &mut rng), None).unwrap();
    let grid = default_alpha_grid();
    let report = logit_trajectory(&contexts, &quad, &dir, &gamma, &grid).unwrap();
    let slope = alpha_hat(&gamma, quad.y10(), quad.y00(), &dir, &mc).unwrap();
    for series in &report.target_logits {
        for (i, pair) in series.windows(2).enumerate() {
            let step = grid[i + 1] - grid[i];
            assert_relative_eq!(
                (pair[1] - pair[0]) / step,
                slope,
                epsilon = 1e-8,
                max_relative = 1e-8
            );
        }
    }
}
