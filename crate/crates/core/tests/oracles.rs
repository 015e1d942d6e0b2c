mod common;

use common::{complete_instance, gaussian, missing_instance, rng};
use jaca::simulate::{ClassStrength, CovKind};
use jaca::{
    cross_validate, fit_classifier, sample_dataset, train, CVConfig, Dataset32, JacaError, Model, SimulationConfig,
    SimulationTruth, TrainConfig, Truth,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

fn canonical_correlations(truth: &Truth, d: usize, l: usize) -> Vec<f64> {
    let m = inv_sqrt(&truth.marginal_cov(d)) * truth.cross_cov(d, l) * inv_sqrt(&truth.marginal_cov(l));
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn small_config(extra: Vec<f64>, k: usize, seed: u64) -> SimulationConfig {
    let priors = vec![1.0 / k as f64; k];
    SimulationConfig {
        n_labeled: 40,
        n_unlabeled: 0,
        n_test: 0,
        p: vec![8, 6],
        n_classes: k,
        priors,
        s: 4,
        class_strength: ClassStrength::from_correlation(0.8),
        extra_corrs: extra,
        cov_kind: vec![CovKind::Autoregressive { phi: 0.8 }, CovKind::Autoregressive { phi: 0.5 }],
        seed,
    }
}

#[test]
fn population_canonical_correlations_match_the_configuration() {
    let case1: Truth = SimulationTruth::generate(&SimulationConfig::two_view_case(1, (30, 30), 1).unwrap()).unwrap();
    let cc = canonical_correlations(&case1, 0, 1);
    assert!((cc[0] - 0.8).abs() < 1e-8, "{cc:?}");
    assert!(cc[1] < 1e-8);
    assert!((case1.class_correlations(0, 1)[0] - 0.8).abs() < 1e-12);

    let truth: Truth = SimulationTruth::generate(&small_config(vec![0.6, 0.5], 3, 2)).unwrap();
    let cc = canonical_correlations(&truth, 0, 1);
    for (got, want) in cc.iter().zip([0.8, 0.8, 0.6, 0.5, 0.0]) {
        assert!((got - want).abs() < 1e-8, "{cc:?}");
    }
}

#[test]
fn discriminant_vectors_have_the_configured_sparsity() {
    let truth: Truth = SimulationTruth::generate(&small_config(vec![0.6], 3, 3)).unwrap();
    for d in 0..2 {
        let b = &truth.class_loadings[d];
        let nonzero: Vec<usize> = (0..b.nrows()).filter(|&j| b.row(j).amax() > 0.0).collect();
        assert_eq!(nonzero, truth.support[d]);
        assert_eq!(nonzero.len(), 4);
        let gram = b.transpose() * &truth.sigma_tilde[d] * b;
        let c2 = truth.class_strength[d][0].powi(2);
        assert!((gram - DMatrix::identity(2, 2) * c2).amax() < 1e-10);
        let cross = truth.class_loadings[d].transpose() * &truth.shared_loadings[d];
        assert!(cross.amax() < 1e-10);
    }
}

#[test]
fn sample_moments_converge_to_population_covariances() {
    let truth: Truth = SimulationTruth::generate(&small_config(vec![0.6], 3, 4)).unwrap();
    let n = 200_000;
    let (ds, classes) = truth.sample(n, 0, "s", &mut rng(9)).unwrap();
    let joint = DMatrix::from_fn(n, 14, |i, j| if j < 8 { ds.view(0)[(i, j)] } else { ds.view(1)[(i, j - 8)] });
    let mean = joint.row_mean();
    let centered = DMatrix::from_fn(n, 14, |i, j| joint[(i, j)] - mean[j]);
    let emp = centered.transpose() * &centered / n as f64;
    let mut pop = DMatrix::zeros(14, 14);
    pop.view_mut((0, 0), (8, 8)).copy_from(&truth.marginal_cov(0));
    pop.view_mut((8, 8), (6, 6)).copy_from(&truth.marginal_cov(1));
    pop.view_mut((0, 8), (8, 6)).copy_from(&truth.cross_cov(0, 1));
    pop.view_mut((8, 0), (6, 8)).copy_from(&truth.cross_cov(0, 1).transpose());
    for i in 0..14 {
        assert!(mean[i].abs() < 6.0 * (pop[(i, i)] / n as f64).sqrt());
        for j in 0..14 {
            let sd = ((pop[(i, i)] * pop[(j, j)] + pop[(i, j)].powi(2)) / n as f64).sqrt();
            assert!((emp[(i, j)] - pop[(i, j)]).abs() < 8.0 * sd, "({i},{j}) {} vs {}", emp[(i, j)], pop[(i, j)]);
        }
    }
    for k in 0..3 {
        let rows: Vec<usize> = (0..n).filter(|&i| classes[i] == k).collect();
        let share = rows.len() as f64 / n as f64;
        assert!((share - 1.0 / 3.0).abs() < 0.01);
        let m = joint.select_rows(&rows).row_mean();
        let want = truth.indicators().row(k) * truth.delta[0].transpose();
        for j in 0..8 {
            assert!((m[j] - want[j]).abs() < 0.05, "class {k} feature {j}");
        }
    }
}

/// LDA from its definition: Gaussian log densities with the pooled covariance.
fn brute_force_lda(train: &DMatrix<f64>, labels: &[usize], k: usize, test: &DMatrix<f64>) -> (Vec<usize>, DMatrix<f64>) {
    let (n, q) = train.shape();
    let mut means = DMatrix::zeros(k, q);
    let mut counts = vec![0.0; k];
    for (i, &y) in labels.iter().enumerate() {
        let mut row = means.row_mut(y);
        row += train.row(i);
        counts[y] += 1.0;
    }
    for c in 0..k {
        let mut row = means.row_mut(c);
        row /= counts[c];
    }
    let mut cov = DMatrix::zeros(q, q);
    for (i, &y) in labels.iter().enumerate() {
        let r = train.row(i) - means.row(y);
        cov += r.transpose() * &r;
    }
    cov /= (n - k) as f64;
    let ridge = 1e-8 * cov.trace() / q as f64;
    for j in 0..q {
        cov[(j, j)] += ridge;
    }
    let inv = cov.try_inverse().unwrap();
    let scores = DMatrix::from_fn(test.nrows(), k, |i, c| {
        let r = test.row(i) - means.row(c);
        (counts[c] / n as f64).ln() - 0.5 * (&r * &inv * r.transpose())[(0, 0)]
    });
    let labels = scores.row_iter().map(|r| r.transpose().argmax().0).collect();
    (labels, scores)
}

#[test]
fn lda_matches_the_gaussian_density_rule() {
    let mut r = rng(21);
    for trial in 0..20 {
        let k = r.random_range(2..=4);
        let q = r.random_range(1..=4);
        let n = r.random_range(k + q + 3..60);
        let labels = common::labels_covering(&mut r, n, k);
        let centers = gaussian(&mut r, k, q) * 2.0;
        let train = DMatrix::from_fn(n, q, |i, j| centers[(labels[i], j)]) + gaussian(&mut r, n, q);
        let test = gaussian(&mut r, 200, q) * 2.5;
        let clf = fit_classifier(&train, &labels, k, vec![0]).unwrap();
        let (want, scores) = brute_force_lda(&train, &labels, k, &test);
        assert_eq!(clf.predict(&test).unwrap(), want, "trial {trial}");
        let got = clf.discriminants(&test).unwrap();
        for i in 0..test.nrows() {
            for c in 1..k {
                let a = got[(i, c)] - got[(i, 0)];
                let b = scores[(i, c)] - scores[(i, 0)];
                assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn lda_rejects_too_few_subjects() {
    let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    assert!(fit_classifier(&x, &[0, 1], 2, vec![0]).is_err());
}

#[test]
fn cross_validation_is_seed_deterministic_and_picks_the_argmax() {
    let mut r = rng(31);
    let ds = missing_instance(&mut r, 40, &[6, 5], 2);
    let cfg = CVConfig {
        n_folds: 4,
        rho_grid: vec![0.25, 0.75],
        epsilon_grid: jaca::select::log_grid(1.0, 0.05, 6),
        seed: 7,
        ..CVConfig::default()
    };
    let a = cross_validate(&ds, &cfg).unwrap();
    let b = cross_validate(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    let best = a.criterion.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.best_criterion, best);
    for (f, m) in a.fold_criterion.iter().enumerate() {
        assert_eq!(m.shape(), a.criterion.shape(), "fold {f}");
    }
    let mean = a.fold_criterion.iter().fold(DMatrix::zeros(2, 6), |acc, m| acc + m) / 4.0;
    assert!((mean - &a.criterion).amax() < 1e-12);
    let (i, j) = (0..2)
        .flat_map(|i| (0..6).map(move |j| (i, j)))
        .filter(|&(i, j)| a.criterion[(i, j)] == best)
        .max_by(|x, y| a.epsilon_grid[x.1].total_cmp(&a.epsilon_grid[y.1]).then(x.0.cmp(&y.0)))
        .unwrap();
    assert_eq!((a.best_rho, a.best_epsilon), (a.rho_grid[i], a.epsilon_grid[j]));
    // ε = 1 zeroes every view, leaving no signal to correlate.
    assert!(a.criterion.column(0).iter().all(|&v| v == 0.0));
}

#[test]
fn model_json_round_trip_preserves_predictions() {
    let cfg = SimulationConfig { n_test: 300, ..small_config(vec![], 2, 41) };
    let sim = sample_dataset::<f64>(&cfg).unwrap();
    let model = train(&sim.train, &TrainConfig::new(0.5, 0.5, 0.2)).unwrap();
    let mut buf = Vec::new();
    model.write_json(&mut buf).unwrap();
    let back = Model::read_json(buf.as_slice()).unwrap();
    let test = sim.test.as_ref().unwrap();
    for views in [vec![0], vec![1], vec![0, 1]] {
        let a = model.predict(test, &views).unwrap();
        let b = back.predict(test, &views).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.discriminants, b.discriminants);
    }
    assert_eq!(model.coefficients, back.coefficients);
}

#[test]
fn truth_json_round_trip_is_exact() {
    let truth: Truth = SimulationTruth::generate(&small_config(vec![0.6, 0.5, 0.4], 2, 5)).unwrap();
    let mut buf = Vec::new();
    truth.write_json(&mut buf).unwrap();
    let back: Truth = SimulationTruth::read_json(buf.as_slice()).unwrap();
    assert_eq!(back.shared_loadings, truth.shared_loadings);
    assert_eq!(back.class_loadings, truth.class_loadings);
    assert_eq!(back.support, truth.support);
    assert_eq!(back.marginal_cov(1), truth.marginal_cov(1));
}

#[test]
fn predicting_without_a_required_view_fails() {
    let mut r = rng(51);
    let train_ds = complete_instance(&mut r, 30, &[4, 3], 2);
    let model = train(&train_ds, &TrainConfig::new(0.5, 0.5, 0.1)).unwrap();
    let partial = missing_instance(&mut r, 12, &[4, 3], 2);
    let err = model.predict(&partial, &[0, 1]).unwrap_err();
    assert!(matches!(err, JacaError::MissingView { .. }), "{err}");
}

#[test]
fn single_precision_pipeline_runs() {
    let cfg = SimulationConfig { n_test: 500, ..small_config(vec![], 2, 61) };
    let sim = sample_dataset::<f32>(&cfg).unwrap();
    let train_ds: &Dataset32 = &sim.train;
    let model = train(train_ds, &TrainConfig::new(0.5f32, 0.5, 0.2)).unwrap();
    let test = sim.test.as_ref().unwrap();
    let predicted = model.predict(test, &[0, 1]).unwrap().labels;
    let truth: Vec<usize> = test.labels().iter().map(|l| l.unwrap()).collect();
    let err = jaca::misclassification_rate(&predicted, &truth).unwrap();
    assert!(err < 0.2, "error {err}");
}
