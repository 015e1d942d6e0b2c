//! Multi-view data containers, standardization, the optimal-scoring class
//! response and the block-missingness pattern sets.

mod csv_io;

pub use self::csv_io::{load_views, load_views_with_classes, write_labels, write_view};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{JacaError, Result};
use crate::scalar::Scalar;

/// `D` row-aligned views on the same `n` subjects.
///
/// A subject's view is either fully observed or fully absent; absent rows are
/// stored as `NaN`. Labels are 0-based class indices internally (`1..=K` in
/// files).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset<T: Scalar> {
    views: Vec<DMatrix<T>>,
    present: Vec<Vec<bool>>,
    labels: Vec<Option<usize>>,
    n_classes: usize,
    subject_ids: Vec<String>,
    feature_names: Vec<Vec<String>>,
}

impl<T: Scalar> MultiViewDataset<T> {
    /// Builds a dataset and checks the structural invariants.
    ///
    /// `present[i][d]` flags whether subject `i` has view `d`.
    pub fn new(
        views: Vec<DMatrix<T>>,
        present: Vec<Vec<bool>>,
        labels: Vec<Option<usize>>,
        n_classes: usize,
        subject_ids: Vec<String>,
        feature_names: Vec<Vec<String>>,
    ) -> Result<Self> {
        let n = subject_ids.len();
        let d = views.len();
        if d < 2 {
            return Err(JacaError::InvalidDataset(format!(
                "need at least 2 views, got {d}"
            )));
        }
        if n_classes < 2 {
            return Err(JacaError::InvalidDataset(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if present.len() != n || labels.len() != n {
            return Err(JacaError::DimensionMismatch(format!(
                "{n} subject ids but {} presence rows and {} labels",
                present.len(),
                labels.len()
            )));
        }
        if feature_names.len() != d {
            return Err(JacaError::DimensionMismatch(format!(
                "{d} views but {} feature-name lists",
                feature_names.len()
            )));
        }
        for (v, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(JacaError::DimensionMismatch(format!(
                    "view {} has {} rows, expected {n}",
                    v + 1,
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(JacaError::InvalidDataset(format!(
                    "view {} has no features",
                    v + 1
                )));
            }
            if feature_names[v].len() != x.ncols() {
                return Err(JacaError::DimensionMismatch(format!(
                    "view {} has {} columns but {} feature names",
                    v + 1,
                    x.ncols(),
                    feature_names[v].len()
                )));
            }
        }
        for (i, flags) in present.iter().enumerate() {
            if flags.len() != d {
                return Err(JacaError::DimensionMismatch(format!(
                    "presence row {i} has {} flags, expected {d}",
                    flags.len()
                )));
            }
            for (v, &p) in flags.iter().enumerate() {
                let row = views[v].row(i);
                let ok = if p {
                    row.iter().all(|x| x.finite())
                } else {
                    row.iter().all(|x| !x.finite())
                };
                if !ok {
                    return Err(JacaError::InvalidDataset(format!(
                        "subject `{}`, view {}: values must be finite iff the view is present",
                        subject_ids[i],
                        v + 1
                    )));
                }
            }
        }
        if let Some((i, k)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&k| k >= n_classes).map(|k| (i, k)))
        {
            return Err(JacaError::InvalidLabel {
                id: subject_ids[i].clone(),
                value: (k + 1).to_string(),
                max: n_classes,
            });
        }
        Ok(Self {
            views,
            present,
            labels,
            n_classes,
            subject_ids,
            feature_names,
        })
    }

    /// Fully observed dataset: every view present, every subject labeled.
    pub fn complete(views: Vec<DMatrix<T>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n = labels.len();
        let d = views.len();
        let ids = (0..n).map(|i| format!("s{}", i + 1)).collect();
        let names = views
            .iter()
            .enumerate()
            .map(|(v, x)| (0..x.ncols()).map(|j| format!("v{}_f{}", v + 1, j + 1)).collect())
            .collect();
        Self::new(
            views,
            vec![vec![true; d]; n],
            labels.into_iter().map(Some).collect(),
            n_classes,
            ids,
            names,
        )
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn view(&self, d: usize) -> &DMatrix<T> {
        &self.views[d]
    }

    pub fn views(&self) -> &[DMatrix<T>] {
        &self.views
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.ncols()).collect()
    }

    pub fn is_present(&self, subject: usize, view: usize) -> bool {
        self.present[subject][view]
    }

    pub fn presence(&self) -> &[Vec<bool>] {
        &self.present
    }

    pub fn label(&self, subject: usize) -> Option<usize> {
        self.labels[subject]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn feature_names(&self, d: usize) -> &[String] {
        &self.feature_names[d]
    }

    /// Subjects with the given view present, in subject order.
    pub fn subjects_with_view(&self, d: usize) -> Vec<usize> {
        (0..self.n_subjects()).filter(|&i| self.present[i][d]).collect()
    }

    pub fn has_any_view(&self, subject: usize) -> bool {
        self.present[subject].iter().any(|&p| p)
    }

    /// No view and no label missing for any subject.
    pub fn is_complete(&self) -> bool {
        self.present.iter().all(|r| r.iter().all(|&p| p)) && self.labels.iter().all(Option::is_some)
    }

    /// Rows in the given order (subjects may repeat).
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            views: self.views.iter().map(|x| x.select_rows(rows)).collect(),
            present: rows.iter().map(|&i| self.present[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            subject_ids: rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Subjects with every view and a label.
    pub fn complete_cases(&self) -> Self {
        let rows: Vec<usize> = (0..self.n_subjects())
            .filter(|&i| self.labels[i].is_some() && self.present[i].iter().all(|&p| p))
            .collect();
        self.subset(&rows)
    }

    /// Same data with every label marked missing.
    pub fn without_labels(&self) -> Self {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|l| *l = None);
        out
    }

    /// Checks the extra conditions needed to train on this dataset: at least two
    /// subjects and every class labeled on a subject with at least one view.
    pub fn check_trainable(&self) -> Result<()> {
        if self.n_subjects() < 2 {
            return Err(JacaError::InvalidDataset(format!(
                "need at least 2 subjects, got {}",
                self.n_subjects()
            )));
        }
        let mut seen = vec![false; self.n_classes];
        for i in 0..self.n_subjects() {
            if let Some(k) = self.labels[i] {
                if self.has_any_view(i) {
                    seen[k] = true;
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            Some(k) => Err(JacaError::EmptyClass(k + 1)),
            None => Ok(()),
        }
    }

    /// Applies stored per-view transforms (training statistics, never refit).
    pub fn apply_transforms(&self, transforms: &[StandardizationTransform<T>]) -> Result<Self> {
        if transforms.len() != self.n_views() {
            return Err(JacaError::DimensionMismatch(format!(
                "{} transforms for {} views",
                transforms.len(),
                self.n_views()
            )));
        }
        let mut out = self.clone();
        for (x, t) in out.views.iter_mut().zip(transforms) {
            *x = t.apply(x)?;
        }
        Ok(out)
    }
}

/// Per-view column centering and scaling learned on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationTransform<T: Scalar> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
}

impl<T: Scalar> StandardizationTransform<T> {
    pub fn identity(p: usize) -> Self {
        Self {
            means: vec![T::zero(); p],
            scales: vec![T::one(); p],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// `(x - mean) / scale` column-wise; absent (`NaN`) rows stay absent.
    pub fn apply(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.dim() {
            return Err(JacaError::DimensionMismatch(format!(
                "transform has {} columns, matrix has {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    /// Maps coefficients fitted on the standardized scale back to raw features.
    pub fn unscale_coefficients(&self, w: &DMatrix<T>) -> DMatrix<T> {
        let mut out = w.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            let s = self.scales[j];
            row.apply(|v| *v /= s);
        }
        out
    }
}

/// Centers each view to mean zero and scales it so `n⁻¹ XᵀX` has unit diagonal,
/// with statistics computed over the rows where the view is present.
///
/// Constant columns are centered to zero and given scale 1.
pub fn standardize<T: Scalar>(
    ds: &MultiViewDataset<T>,
) -> Result<(MultiViewDataset<T>, Vec<StandardizationTransform<T>>)> {
    let mut transforms = Vec::with_capacity(ds.n_views());
    let mut constant = Vec::with_capacity(ds.n_views());
    for d in 0..ds.n_views() {
        let rows = ds.subjects_with_view(d);
        if rows.len() < 2 {
            return Err(JacaError::InvalidDataset(format!(
                "view {} has {} present rows; need at least 2 to standardize",
                d + 1,
                rows.len()
            )));
        }
        let x = ds.view(d);
        let m = T::from_count(rows.len());
        let mut t = StandardizationTransform::identity(x.ncols());
        let mut flat = vec![false; x.ncols()];
        for (j, col) in x.column_iter().enumerate() {
            let mean = rows.iter().fold(T::zero(), |acc, &i| acc + col[i]) / m;
            let var = rows
                .iter()
                .fold(T::zero(), |acc, &i| acc + (col[i] - mean) * (col[i] - mean))
                / m;
            let sd = var.sqrt();
            t.means[j] = mean;
            if sd <= T::default_epsilon() * T::lit(16.0) * mean.abs().max(T::one()) {
                flat[j] = true;
            } else {
                t.scales[j] = sd;
            }
        }
        transforms.push(t);
        constant.push(flat);
    }
    let mut out = ds.apply_transforms(&transforms)?;
    for (d, flat) in constant.iter().enumerate() {
        let rows = ds.subjects_with_view(d);
        for j in flat.iter().enumerate().filter(|(_, &c)| c).map(|(j, _)| j) {
            for &i in &rows {
                out.views[d][(i, j)] = T::zero();
            }
        }
    }
    Ok((out, transforms))
}

/// Transformed class response `Ỹ = Z H` of the optimal-scoring formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T: Scalar> {
    /// `n_labeled × (K−1)`, rows in `subjects` order.
    pub scores: DMatrix<T>,
    /// `K × (K−1)` contrast matrix `H`.
    pub contrasts: DMatrix<T>,
    pub class_counts: Vec<usize>,
    /// Dataset row of each score row.
    pub subjects: Vec<usize>,
}

impl<T: Scalar> ScoreMatrix<T> {
    /// Score matrix over the labeled subjects having at least one view.
    pub fn for_training(ds: &MultiViewDataset<T>) -> Result<Self> {
        let subjects: Vec<usize> = (0..ds.n_subjects())
            .filter(|&i| ds.label(i).is_some() && ds.has_any_view(i))
            .collect();
        let labels: Vec<usize> = subjects.iter().map(|&i| ds.label(i).unwrap()).collect();
        let mut sm = build_score_matrix(&labels, ds.n_classes())?;
        sm.subjects = subjects;
        Ok(sm)
    }

    pub fn n_labeled(&self) -> usize {
        self.scores.nrows()
    }

    /// Score row for each dataset subject, `None` when the subject is unlabeled.
    pub fn row_lookup(&self, n_subjects: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; n_subjects];
        for (r, &i) in self.subjects.iter().enumerate() {
            map[i] = Some(r);
        }
        map
    }
}

/// Contrast matrix `H` with columns
/// `H_l = (√(n n_{l+1} / (s_l s_{l+1})) × l, −√(n s_l / (n_{l+1} s_{l+1})), 0, …)`
/// where `s_l` are cumulative class counts.
pub fn contrast_matrix<T: Scalar>(class_counts: &[usize]) -> DMatrix<T> {
    let k = class_counts.len();
    let n: usize = class_counts.iter().sum();
    let nf = T::from_count(n);
    let mut h = DMatrix::zeros(k, k - 1);
    let mut cum = class_counts[0];
    for l in 0..k - 1 {
        let next = class_counts[l + 1];
        let s_l = T::from_count(cum);
        let s_next = T::from_count(cum + next);
        let n_next = T::from_count(next);
        let upper = (nf * n_next / (s_l * s_next)).sqrt();
        for r in 0..=l {
            h[(r, l)] = upper;
        }
        h[(l + 1, l)] = -(nf * s_l / (n_next * s_next)).sqrt();
        cum += next;
    }
    h
}

/// Builds `Ỹ` for 0-based labels; rows follow input order.
pub fn build_score_matrix<T: Scalar>(labels: &[usize], n_classes: usize) -> Result<ScoreMatrix<T>> {
    if n_classes < 2 {
        return Err(JacaError::InvalidParameter(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    let mut counts = vec![0usize; n_classes];
    for &k in labels {
        if k >= n_classes {
            return Err(JacaError::InvalidParameter(format!(
                "label {} outside 1..={n_classes}",
                k + 1
            )));
        }
        counts[k] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(JacaError::EmptyClass(k + 1));
    }
    let h = contrast_matrix::<T>(&counts);
    let mut y = DMatrix::zeros(labels.len(), n_classes - 1);
    for (i, &k) in labels.iter().enumerate() {
        y.row_mut(i).copy_from(&h.row(k));
    }
    Ok(ScoreMatrix {
        scores: y,
        contrasts: h,
        class_counts: counts,
        subjects: (0..labels.len()).collect(),
    })
}

/// Subject index sets entering each loss term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingPatternSets {
    /// Per view `d`: subjects with a label and view `d`.
    pub classification: Vec<Vec<usize>>,
    /// Per pair `(d, l)`, `d < l`, in lexicographic order: subjects with both views.
    pub pairs: Vec<((usize, usize), Vec<usize>)>,
}

impl MissingPatternSets {
    pub fn pair(&self, d: usize, l: usize) -> Option<&[usize]> {
        let key = if d < l { (d, l) } else { (l, d) };
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, rows)| rows.as_slice())
    }
}

/// View pairs `(d, l)` with `d < l` in lexicographic order.
pub fn view_pairs(n_views: usize) -> Vec<(usize, usize)> {
    (0..n_views)
        .flat_map(|d| (d + 1..n_views).map(move |l| (d, l)))
        .collect()
}

pub fn missing_patterns<T: Scalar>(ds: &MultiViewDataset<T>) -> MissingPatternSets {
    let n = ds.n_subjects();
    let classification = (0..ds.n_views())
        .map(|d| {
            (0..n)
                .filter(|&i| ds.label(i).is_some() && ds.is_present(i, d))
                .collect()
        })
        .collect();
    let pairs = view_pairs(ds.n_views())
        .into_iter()
        .map(|(d, l)| {
            let rows = (0..n)
                .filter(|&i| ds.is_present(i, d) && ds.is_present(i, l))
                .collect();
            ((d, l), rows)
        })
        .collect();
    MissingPatternSets {
        classification,
        pairs,
    }
}

/// Column means over rows, used to center projections.
pub(crate) fn center_columns<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let mut out = x.clone();
    if x.nrows() == 0 {
        return out;
    }
    let m = T::from_count(x.nrows());
    for mut col in out.column_iter_mut() {
        let mean = col.iter().fold(T::zero(), |a, &v| a + v) / m;
        col.apply(|v| *v -= mean);
    }
    out
}
