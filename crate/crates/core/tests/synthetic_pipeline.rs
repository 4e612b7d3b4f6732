use concept_geometry::concepts::{estimate_direction, loo_directions};
use concept_geometry::metric::{cip, MetricContext};
use concept_geometry::model_io::{
    load_concept_pairs, load_embedding_set, load_matrix, load_quadruples, load_unembeddings,
    MatrixKind,
};
use concept_geometry::probe::{alpha_hat, probe_report};
use concept_geometry::synthetic::{
    random_gaussian_transform, verify_report, SyntheticModel, SyntheticSpec, VerifyThresholds,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn model(noise: f64) -> SyntheticModel {
    SyntheticModel::build(SyntheticSpec {
        noise_sigma: noise,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.max();
    let e = logits.map(|l| (l - max).exp());
    let z = e.sum();
    e / z
}

#[test]
fn reparameterization_preserves_softmax() {
    let m = model(0.05);
    for r in (0..m.contexts.len()).step_by(50) {
        let latent = softmax(&(&m.latent * m.latent_contexts.row(r).transpose()));
        let observed = softmax(&(m.gamma.matrix() * m.contexts.row(r)));
        assert!((latent - observed).amax() < 1e-10);
    }
}

#[test]
fn noiseless_metric_reproduces_planted_cips() {
    let m = model(0.0);
    let mc = MetricContext::from_unembeddings(&m.gamma, 0.0).unwrap();
    let truth = m.ground_truth();
    for (i, a) in truth.gamma_bars.iter().enumerate() {
        for (j, b) in truth.gamma_bars.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((cip(a, b, &mc).unwrap() - want).abs() < 1e-6);
        }
    }
    let rel = (&mc.metric - &truth.metric_true).norm() / truth.metric_true.norm();
    assert!(rel < 1e-8);
}

#[test]
fn loo_directions_stay_close_to_full_estimate() {
    let m = model(0.05);
    let mc = MetricContext::from_unembeddings(&m.gamma, 1e-6).unwrap();
    for pairs in &m.pair_sets {
        let full = estimate_direction(&m.gamma, pairs, &mc).unwrap();
        for loo in loo_directions(&m.gamma, pairs, &mc).unwrap() {
            assert!(mc.cosine(&loo.gamma_bar, &full.gamma_bar).unwrap() > 0.98);
        }
    }
}

#[test]
fn pair_coefficients_are_positive_and_explain_the_diffs() {
    let m = model(0.05);
    let mc = MetricContext::from_unembeddings(&m.gamma, 1e-6).unwrap();
    for pairs in &m.pair_sets {
        let dir = estimate_direction(&m.gamma, pairs, &mc).unwrap();
        for &(id0, id1) in &pairs.pairs {
            let a = alpha_hat(&m.gamma, id1, id0, &dir, &mc).unwrap();
            assert!(a > 0.0);
            let diff = m.gamma.diff(id1, id0).unwrap();
            let explained = a * a / cip(&diff, &diff, &mc).unwrap();
            assert!(explained > 0.9, "{}: {explained}", pairs.name);
        }
    }

    let exact = model(0.0);
    let mc = MetricContext::from_unembeddings(&exact.gamma, 0.0).unwrap();
    for pairs in &exact.pair_sets {
        let dir = estimate_direction(&exact.gamma, pairs, &mc).unwrap();
        for &(id0, id1) in &pairs.pairs {
            let a = alpha_hat(&exact.gamma, id1, id0, &dir, &mc).unwrap();
            let diff = exact.gamma.diff(id1, id0).unwrap();
            assert!((a * a / cip(&diff, &diff, &mc).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn probe_separates_on_target_only() {
    let m = model(0.05);
    let mc = MetricContext::from_unembeddings(&m.gamma, 1e-6).unwrap();
    let dirs: Vec<_> = m
        .pair_sets
        .iter()
        .map(|p| estimate_direction(&m.gamma, p, &mc).unwrap())
        .collect();
    for i in 0..m.concepts() {
        let (a, b) = m.probe_groups(i).unwrap();
        let on = probe_report(&dirs[i], &a, &b).unwrap();
        assert!(on.auc > 0.99, "on-target auc {}", on.auc);
        let j = (i + 1) % m.concepts();
        let off = probe_report(&dirs[j], &a, &b).unwrap();
        assert!((0.4..=0.6).contains(&off.auc), "off-target auc {}", off.auc);
    }
}

#[test]
fn verify_report_exact_and_approximate() {
    let exact = model(0.0);
    let mc = MetricContext::from_unembeddings(&exact.gamma, 0.0).unwrap();
    let report = verify_report(&exact, &mc).unwrap();
    assert!(report.passes(&VerifyThresholds::exact()), "{report:?}");
    assert!(report.dir_cos.iter().all(|&c| c > 1.0 - 1e-8));
    assert!(report.heatmap_offdiag_max < 1e-6);

    let noisy = model(0.05);
    let mc = MetricContext::from_unembeddings(&noisy.gamma, 1e-6).unwrap();
    let report = verify_report(&noisy, &mc).unwrap();
    assert!(report.dir_cos.iter().all(|&c| c > 0.99));
    assert!(report.heatmap_offdiag_max < 0.05);
    assert_eq!(report, verify_report(&noisy, &mc).unwrap());
}

#[test]
fn planted_basis_satisfies_explicit_form_only_without_noise() {
    let exact = model(0.0);
    let mc = MetricContext::from_unembeddings(&exact.gamma, 0.0).unwrap();
    let report = verify_report(&exact, &mc).unwrap();
    assert!(report.explicit_form_offdiag_rel < 1e-6);
    assert!(report.explicit_form_m_residual < 1e-6);
}

#[test]
fn reparameterize_matches_independent_transform() {
    let m = model(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a0, b0) = random_gaussian_transform(16, 100.0, &mut rng);
    let moved = m.reparameterize(&a0, &b0).unwrap();
    let mut expected = m.gamma.matrix() * a0.transpose();
    for mut row in expected.row_iter_mut() {
        row += b0.transpose();
    }
    assert!((moved.gamma.matrix() - &expected).amax() < 1e-10 * expected.amax());
    let truth = moved.ground_truth();
    for (i, g) in m.ground_truth().gamma_bars.iter().enumerate() {
        let want = &a0 * g;
        assert!((&truth.gamma_bars[i] - &want).norm() < 1e-10 * want.norm());
    }
}

#[test]
fn export_reloads_through_model_io() {
    let m = model(0.05);
    let dir = tempdir().unwrap();
    m.export(dir.path()).unwrap();
    let gamma = load_unembeddings(dir.path().join("unembeddings.cgt")).unwrap();
    assert_eq!(gamma.vocab_size(), 256);
    assert!((gamma.matrix() - m.gamma.matrix()).amax() < 1e-5 * m.gamma.matrix().amax());
    let pairs = load_concept_pairs(dir.path().join("pairs.txt"), 256).unwrap();
    assert_eq!(pairs, m.pair_sets);
    let quads = load_quadruples(dir.path().join("quads.txt"), 256).unwrap();
    assert_eq!(quads, m.quadruples);
    let ctx = load_embedding_set(
        dir.path().join("contexts.cgt"),
        Some(&dir.path().join("contexts.labels")),
    )
    .unwrap();
    assert_eq!(ctx.labels(), m.contexts.labels());
    assert_eq!(ctx.len(), 2 * 4 * 200);
    let truth = load_matrix(dir.path().join("truth_directions.cgt")).unwrap();
    assert_eq!(truth.kind, MatrixKind::Unembedding);
    assert_eq!(truth.data.shape(), (4, 16));
}
