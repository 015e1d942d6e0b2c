//! Linear discriminant analysis on projected scores `X_d W_d`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::dataset::{MultiViewDataset, StandardizationTransform};
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;
use crate::solver::CoefficientBlocks;

/// Scores `[X_{v1} W_{v1}, X_{v2} W_{v2}, …]` of already standardized data,
/// blocks concatenated in the order of `views` (0-based).
pub fn project_standardized<T: Scalar>(
    ds: &MultiViewDataset<T>,
    w: &CoefficientBlocks<T>,
    views: &[usize],
) -> Result<DMatrix<T>> {
    check_views(ds.n_views(), views)?;
    if w.dims() != ds.view_dims() {
        return Err(JacaError::DimensionMismatch(format!(
            "coefficients {:?} do not match views {:?}",
            w.dims(),
            ds.view_dims()
        )));
    }
    for &d in views {
        let missing: Vec<String> = (0..ds.n_subjects())
            .filter(|&i| !ds.is_present(i, d))
            .map(|i| ds.subject_ids()[i].clone())
            .collect();
        if !missing.is_empty() {
            return Err(JacaError::MissingView {
                view: d + 1,
                subjects: missing,
            });
        }
    }
    let k1 = w.n_responses();
    let mut out = DMatrix::zeros(ds.n_subjects(), k1 * views.len());
    for (b, &d) in views.iter().enumerate() {
        out.columns_mut(b * k1, k1).copy_from(&(ds.view(d) * w.block(d)));
    }
    Ok(out)
}

/// Standardizes with the training transforms, then projects.
pub fn project<T: Scalar>(
    ds: &MultiViewDataset<T>,
    w: &CoefficientBlocks<T>,
    transforms: &[StandardizationTransform<T>],
    views: &[usize],
) -> Result<DMatrix<T>> {
    project_standardized(&ds.apply_transforms(transforms)?, w, views)
}

fn check_views(n_views: usize, views: &[usize]) -> Result<()> {
    if views.is_empty() {
        return Err(JacaError::InvalidParameter("no views requested".into()));
    }
    if let Some(&d) = views.iter().find(|&&d| d >= n_views) {
        return Err(JacaError::InvalidParameter(format!(
            "view {} requested but the data have {n_views}",
            d + 1
        )));
    }
    if views.windows(2).any(|w| w[0] >= w[1]) {
        return Err(JacaError::InvalidParameter(
            "views must be distinct and in increasing order".into(),
        ));
    }
    Ok(())
}

/// Gaussian equal-covariance classifier.
#[derive(Debug, Clone)]
pub struct ProjectedClassifier<T: Scalar> {
    /// 0-based views whose score blocks the classifier consumes.
    pub views: Vec<usize>,
    /// `K × q` class means.
    pub means: DMatrix<T>,
    /// Pooled within-class covariance including the ridge.
    pub covariance: DMatrix<T>,
    pub log_priors: Vec<T>,
    // Σ⁻¹ mᵏ as columns, and −½ mᵏᵀΣ⁻¹mᵏ + log πₖ
    weights: DMatrix<T>,
    offsets: Vec<T>,
}

impl<T: Scalar> PartialEq for ProjectedClassifier<T> {
    fn eq(&self, other: &Self) -> bool {
        self.views == other.views
            && self.means == other.means
            && self.covariance == other.covariance
            && self.log_priors == other.log_priors
    }
}

impl<T: Scalar> ProjectedClassifier<T> {
    /// Rebuilds a classifier from stored parameters; `covariance` must already
    /// include any ridge.
    pub fn from_parts(
        views: Vec<usize>,
        means: DMatrix<T>,
        covariance: DMatrix<T>,
        log_priors: Vec<T>,
    ) -> Result<Self> {
        let q = means.ncols();
        if covariance.shape() != (q, q) || log_priors.len() != means.nrows() {
            return Err(JacaError::DimensionMismatch(format!(
                "classifier parts: means {}×{}, covariance {}×{}, {} priors",
                means.nrows(),
                q,
                covariance.nrows(),
                covariance.ncols(),
                log_priors.len()
            )));
        }
        let chol = Cholesky::<T, Dyn>::new(covariance.clone()).ok_or_else(|| {
            JacaError::NonFinite("pooled covariance is not positive definite".into())
        })?;
        let weights = chol.solve(&means.transpose());
        let half = T::lit(0.5);
        let offsets = (0..means.nrows())
            .map(|k| log_priors[k] - half * means.row(k).transpose().dot(&weights.column(k)))
            .collect();
        Ok(Self {
            views,
            means,
            covariance,
            log_priors,
            weights,
            offsets,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// `n × K` matrix of `mᵏᵀΣ⁻¹s − ½mᵏᵀΣ⁻¹mᵏ + log πₖ`.
    pub fn discriminants(&self, scores: &DMatrix<T>) -> Result<DMatrix<T>> {
        if scores.ncols() != self.dim() {
            return Err(JacaError::DimensionMismatch(format!(
                "scores have {} columns, classifier expects {}",
                scores.ncols(),
                self.dim()
            )));
        }
        let mut out = scores * &self.weights;
        for (k, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.offsets[k]);
        }
        Ok(out)
    }

    /// 0-based class with the largest discriminant; ties go to the lowest index.
    pub fn predict(&self, scores: &DMatrix<T>) -> Result<Vec<usize>> {
        let disc = self.discriminants(scores)?;
        Ok(disc
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for k in 1..r.len() {
                    if r[k] > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }
}

/// Fits LDA with class means, pooled covariance over `n − K` degrees of
/// freedom plus a `1e−8·tr(Σ)/q` ridge (ridge `1` when `Σ = 0`), and
/// empirical priors. Labels are 0-based.
pub fn fit_classifier<T: Scalar>(
    scores: &DMatrix<T>,
    labels: &[usize],
    n_classes: usize,
    views: Vec<usize>,
) -> Result<ProjectedClassifier<T>> {
    let (n, q) = scores.shape();
    if labels.len() != n {
        return Err(JacaError::DimensionMismatch(format!(
            "{n} score rows for {} labels",
            labels.len()
        )));
    }
    if q == 0 {
        return Err(JacaError::InvalidParameter("scores have no columns".into()));
    }
    if n <= n_classes {
        return Err(JacaError::InvalidDataset(format!(
            "{n} samples cannot estimate a covariance for {n_classes} classes"
        )));
    }
    if let Some(&k) = labels.iter().find(|&&k| k >= n_classes) {
        return Err(JacaError::InvalidLabel {
            id: String::new(),
            value: (k + 1).to_string(),
            max: n_classes,
        });
    }
    let mut counts = vec![0usize; n_classes];
    labels.iter().for_each(|&k| counts[k] += 1);
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(JacaError::EmptyClass(k + 1));
    }
    let mut means = DMatrix::zeros(n_classes, q);
    for (i, &k) in labels.iter().enumerate() {
        let mut row = means.row_mut(k);
        row += scores.row(i);
    }
    for (k, &c) in counts.iter().enumerate() {
        means.row_mut(k).unscale_mut(T::from_count(c));
    }
    let mut centered = scores.clone();
    for (i, &k) in labels.iter().enumerate() {
        let mut row = centered.row_mut(i);
        row -= means.row(k);
    }
    let mut cov = centered.tr_mul(&centered) / T::from_count(n - n_classes);
    cov = (&cov + cov.transpose()) * T::lit(0.5);
    let trace = cov.trace();
    let ridge = if trace > T::zero() {
        T::lit(1e-8) * trace / T::from_count(q)
    } else {
        T::one()
    };
    for j in 0..q {
        cov[(j, j)] += ridge;
    }
    let total = T::from_count(n);
    let log_priors = counts.iter().map(|&c| (T::from_count(c) / total).ln()).collect();
    ProjectedClassifier::from_parts(views, means, cov, log_priors)
}

/// Fraction of positions where the two label vectors differ.
pub fn misclassification_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(JacaError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(JacaError::InvalidParameter("no labels to compare".into()));
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}
