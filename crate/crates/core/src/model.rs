//! A fitted JACA model: standardization, coefficients and per-subset LDA rules.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::augment::build_system;
use crate::classify::{fit_classifier, project, project_standardized, ProjectedClassifier};
use crate::dataset::{standardize, MultiViewDataset, StandardizationTransform};
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;
use crate::select::CVResult;
use crate::solver::{fit, CoefficientBlocks, SolverConfig};

/// Up to this many views every nonempty subset gets a classifier; beyond it
/// only single views and the full set do.
const ALL_SUBSETS_MAX_VIEWS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T: Scalar> {
    pub alpha: T,
    pub rho: T,
    pub epsilon: T,
    pub tol: T,
    pub max_iter: usize,
    /// Larger `ε` values fitted first, each warm-starting the next.
    pub warm_path: Vec<T>,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(alpha: T, rho: T, epsilon: T) -> Self {
        Self {
            alpha,
            rho,
            epsilon,
            tol: T::lit(T::DEFAULT_TOL),
            max_iter: 1000,
            warm_path: Vec::new(),
        }
    }

    /// Uses the selected pair of a cross-validation run, warm-starting along
    /// the grid values above the chosen `ε`.
    pub fn from_cv(cv: &CVResult<T>, alpha: T, tol: T, max_iter: usize) -> Self {
        Self {
            alpha,
            rho: cv.best_rho,
            epsilon: cv.best_epsilon,
            tol,
            max_iter,
            warm_path: cv
                .epsilon_grid
                .iter()
                .copied()
                .filter(|&e| e > cv.best_epsilon)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence<T: Scalar> {
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: T,
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T: Scalar> {
    pub alpha: T,
    pub rho: T,
    pub epsilon: T,
    pub lambda: Vec<T>,
    pub n_classes: usize,
    pub feature_names: Vec<Vec<String>>,
    pub transforms: Vec<StandardizationTransform<T>>,
    /// Coefficients on the standardized scale.
    pub coefficients: CoefficientBlocks<T>,
    pub classifiers: Vec<ProjectedClassifier<T>>,
    pub convergence: Convergence<T>,
}

/// Nonempty view subsets (0-based, increasing) that receive a classifier.
pub fn classifier_subsets(n_views: usize) -> Vec<Vec<usize>> {
    if n_views <= ALL_SUBSETS_MAX_VIEWS {
        let mut out: Vec<Vec<usize>> = (1..1usize << n_views)
            .map(|mask| (0..n_views).filter(|d| mask & (1 << d) != 0).collect())
            .collect();
        out.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    } else {
        let mut out: Vec<Vec<usize>> = (0..n_views).map(|d| vec![d]).collect();
        out.push((0..n_views).collect());
        out
    }
}

/// Fits the coefficients at `λ_d = ε·λ_max,d` on standardized `ds`, then an
/// LDA rule for each view subset on the labeled subjects having those views.
/// Subsets with too few such subjects get no classifier.
pub fn train<T: Scalar>(ds: &MultiViewDataset<T>, cfg: &TrainConfig<T>) -> Result<TrainedModel<T>> {
    if !(cfg.epsilon >= T::zero() && cfg.epsilon <= T::one()) {
        return Err(JacaError::InvalidParameter(format!(
            "epsilon must lie in [0, 1], got {}",
            cfg.epsilon
        )));
    }
    ds.check_trainable()?;
    let (std_ds, transforms) = standardize(ds)?;
    let system = build_system(&std_ds, cfg.alpha)?;
    let lambda_max = system.lambda_max();
    let mut path: Vec<T> = cfg.warm_path.iter().copied().filter(|&e| e > cfg.epsilon).collect();
    path.sort_by(|a, b| b.partial_cmp(a).expect("finite path"));
    path.push(cfg.epsilon);

    let mut warm: Option<CoefficientBlocks<T>> = None;
    let mut last = None;
    for eps in path {
        let lambda: Vec<T> = lambda_max.iter().map(|&l| eps * l).collect();
        let mut solver = SolverConfig::new(cfg.rho, lambda.clone())
            .with_tol(cfg.tol)
            .with_max_iter(cfg.max_iter);
        if let Some(w) = warm.take() {
            solver = solver.with_init(w);
        }
        let result = fit(&system, &solver)?;
        warm = Some(result.coefficients.clone());
        last = Some((result, lambda));
    }
    let (result, lambda) = last.expect("path has at least one value");

    let mut classifiers = Vec::new();
    for views in classifier_subsets(ds.n_views()) {
        let rows: Vec<usize> = (0..std_ds.n_subjects())
            .filter(|&i| std_ds.label(i).is_some() && views.iter().all(|&d| std_ds.is_present(i, d)))
            .collect();
        let sub = std_ds.subset(&rows);
        let scores = project_standardized(&sub, &result.coefficients, &views)?;
        let labels: Vec<usize> = rows.iter().map(|&i| std_ds.label(i).unwrap()).collect();
        if let Ok(clf) = fit_classifier(&scores, &labels, ds.n_classes(), views) {
            classifiers.push(clf);
        }
    }

    Ok(TrainedModel {
        alpha: cfg.alpha,
        rho: cfg.rho,
        epsilon: cfg.epsilon,
        lambda,
        n_classes: ds.n_classes(),
        feature_names: (0..ds.n_views()).map(|d| ds.feature_names(d).to_vec()).collect(),
        transforms,
        convergence: Convergence {
            iterations: result.iterations,
            converged: result.converged,
            kkt_residual: result.kkt_residual,
            objective: result.objective(),
        },
        coefficients: result.coefficients,
        classifiers,
    })
}

/// Predicted classes (0-based) and the `n × K` discriminant scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T: Scalar> {
    pub labels: Vec<usize>,
    pub discriminants: DMatrix<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn n_views(&self) -> usize {
        self.coefficients.n_views()
    }

    /// Coefficients for the original feature scale.
    pub fn raw_coefficients(&self) -> CoefficientBlocks<T> {
        self.coefficients
            .unstandardize(&self.transforms)
            .expect("transforms match coefficients")
    }

    pub fn classifier(&self, views: &[usize]) -> Option<&ProjectedClassifier<T>> {
        self.classifiers.iter().find(|c| c.views == views)
    }

    /// Classifies raw (unstandardized) subjects using the given 0-based views.
    pub fn predict(&self, ds: &MultiViewDataset<T>, views: &[usize]) -> Result<Prediction<T>> {
        if ds.view_dims() != self.coefficients.dims() {
            return Err(JacaError::DimensionMismatch(format!(
                "data views {:?} do not match model views {:?}",
                ds.view_dims(),
                self.coefficients.dims()
            )));
        }
        let clf = self.classifier(views).ok_or_else(|| {
            JacaError::InvalidParameter(format!(
                "model has no classifier for views {:?}",
                views.iter().map(|d| d + 1).collect::<Vec<_>>()
            ))
        })?;
        let scores = project(ds, &self.coefficients, &self.transforms, views)?;
        let discriminants = clf.discriminants(&scores)?;
        let labels = clf.predict(&scores)?;
        Ok(Prediction {
            labels,
            discriminants,
        })
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &ModelDocument::from_model(self))?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_reader(reader)?;
        doc.into_model()
    }
}

const MODEL_FORMAT: &str = "jaca-model/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewDocument {
    feature_names: Vec<String>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Row-major `p_d × (K−1)`, standardized scale.
    coefficients: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierDocument {
    /// 1-based.
    views: Vec<usize>,
    means: Vec<Vec<f64>>,
    covariance: Vec<Vec<f64>>,
    log_priors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergenceDocument {
    iterations: usize,
    converged: bool,
    kkt_residual: f64,
    objective: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    alpha: f64,
    rho: f64,
    epsilon: f64,
    lambda: Vec<f64>,
    n_classes: usize,
    views: Vec<ViewDocument>,
    classifiers: Vec<ClassifierDocument>,
    convergence: ConvergenceDocument,
}

fn rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

fn matrix<T: Scalar>(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<T>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(JacaError::Format {
            file: "model".into(),
            reason: format!("{what}: expected rows of length {ncols}"),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| T::lit(rows[i][j])))
}

fn lits<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl ModelDocument {
    fn from_model<T: Scalar>(m: &TrainedModel<T>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            alpha: m.alpha.as_f64(),
            rho: m.rho.as_f64(),
            epsilon: m.epsilon.as_f64(),
            lambda: f64s(&m.lambda),
            n_classes: m.n_classes,
            views: (0..m.n_views())
                .map(|d| ViewDocument {
                    feature_names: m.feature_names[d].clone(),
                    means: f64s(&m.transforms[d].means),
                    scales: f64s(&m.transforms[d].scales),
                    coefficients: rows(m.coefficients.block(d)),
                })
                .collect(),
            classifiers: m
                .classifiers
                .iter()
                .map(|c| ClassifierDocument {
                    views: c.views.iter().map(|d| d + 1).collect(),
                    means: rows(&c.means),
                    covariance: rows(&c.covariance),
                    log_priors: f64s(&c.log_priors),
                })
                .collect(),
            convergence: ConvergenceDocument {
                iterations: m.convergence.iterations,
                converged: m.convergence.converged,
                kkt_residual: m.convergence.kkt_residual.as_f64(),
                objective: m.convergence.objective.as_f64(),
            },
        }
    }

    fn into_model<T: Scalar>(self) -> Result<TrainedModel<T>> {
        let bad = |reason: String| JacaError::Format {
            file: "model".into(),
            reason,
        };
        if self.format != MODEL_FORMAT {
            return Err(bad(format!("unsupported format {:?}", self.format)));
        }
        if self.n_classes < 2 || self.views.len() < 2 || self.lambda.len() != self.views.len() {
            return Err(bad("inconsistent class, view or penalty counts".into()));
        }
        let k1 = self.n_classes - 1;
        let mut transforms = Vec::new();
        let mut blocks = Vec::new();
        let mut feature_names = Vec::new();
        for (d, v) in self.views.into_iter().enumerate() {
            let p = v.feature_names.len();
            if v.means.len() != p || v.scales.len() != p || v.coefficients.len() != p {
                return Err(bad(format!("view {} has inconsistent lengths", d + 1)));
            }
            if v.scales.iter().any(|&s| !(s > 0.0)) {
                return Err(bad(format!("view {} has a nonpositive scale", d + 1)));
            }
            transforms.push(StandardizationTransform {
                means: lits(&v.means),
                scales: lits(&v.scales),
            });
            blocks.push(matrix(&v.coefficients, k1, "coefficients")?);
            feature_names.push(v.feature_names);
        }
        let n_views = blocks.len();
        let mut classifiers = Vec::new();
        for c in self.classifiers {
            if c.views.iter().any(|&d| d == 0 || d > n_views) {
                return Err(bad("classifier view out of range".into()));
            }
            let q = c.views.len() * k1;
            classifiers.push(ProjectedClassifier::from_parts(
                c.views.iter().map(|d| d - 1).collect(),
                matrix(&c.means, q, "classifier means")?,
                matrix(&c.covariance, q, "classifier covariance")?,
                lits(&c.log_priors),
            )?);
        }
        Ok(TrainedModel {
            alpha: T::lit(self.alpha),
            rho: T::lit(self.rho),
            epsilon: T::lit(self.epsilon),
            lambda: lits(&self.lambda),
            n_classes: self.n_classes,
            feature_names,
            transforms,
            coefficients: CoefficientBlocks::new(blocks)?,
            classifiers,
            convergence: Convergence {
                iterations: self.convergence.iterations,
                converged: self.convergence.converged,
                kkt_residual: T::lit(self.convergence.kkt_residual),
                objective: T::lit(self.convergence.objective),
            },
        })
    }
}
