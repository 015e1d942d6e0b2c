//! Stacked least-squares form `(X′, Y′)` of the JACA and ssJACA objectives.
//!
//! Classification block `d` holds `√(α/(nD))·X_d` in the view-`d` columns with
//! response `√(α/(nD))·Ỹ`; pair block `(d, l)` holds `c·X_d` and `−c·X_l` with
//! `c = √((1−α)/(nD(D−1)))` and zero response, so that
//! `½‖Y′ − X′W‖²_F` is the unpenalized objective.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::dataset::{view_pairs, MissingPatternSets, MultiViewDataset, ScoreMatrix};
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;

/// Origin of a row block of the augmented design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOrigin {
    Classification(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlock {
    pub origin: BlockOrigin,
    pub rows: Range<usize>,
    /// Dataset subject behind each row of the block.
    pub subjects: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem<T: Scalar> {
    design: DMatrix<T>,
    response: DMatrix<T>,
    blocks: Vec<RowBlock>,
    view_columns: Vec<Range<usize>>,
    alpha: T,
    n_subjects: usize,
}

impl<T: Scalar> AugmentedSystem<T> {
    /// `X′`, `R × P`.
    pub fn design(&self) -> &DMatrix<T> {
        &self.design
    }

    /// `Y′`, `R × (K−1)`.
    pub fn response(&self) -> &DMatrix<T> {
        &self.response
    }

    pub fn blocks(&self) -> &[RowBlock] {
        &self.blocks
    }

    pub fn view_columns(&self) -> &[Range<usize>] {
        &self.view_columns
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.view_columns.iter().map(|r| r.len()).collect()
    }

    pub fn n_views(&self) -> usize {
        self.view_columns.len()
    }

    pub fn n_responses(&self) -> usize {
        self.response.ncols()
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Subject count used in the `1/(nD)` scaling.
    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    /// `X′_jᵀ M` for column `j`: one entry per column of `m`.
    pub(crate) fn column_cross(&self, j: usize, m: &DMatrix<T>) -> Vec<T> {
        let col = self.design.column(j);
        m.column_iter().map(|c| col.dot(&c)).collect()
    }

    /// `max_j ‖X′_jᵀY′‖₂` over the columns of each view: the smallest `λ_d`
    /// at which `W_d = 0` is optimal, evaluated exactly as the solver sees it at `W = 0`.
    pub fn lambda_max(&self) -> Vec<T> {
        self.view_columns
            .iter()
            .map(|cols| {
                cols.clone()
                    .map(|j| l2(&self.column_cross(j, &self.response)))
                    .fold(T::zero(), |a, b| a.max(b))
            })
            .collect()
    }
}

pub(crate) fn l2<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(JacaError::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// `(√(α/(nD)), √((1−α)/(nD(D−1))))`.
fn block_scales<T: Scalar>(alpha: T, n: usize, d: usize) -> (T, T) {
    let nd = T::from_count(n) * T::from_count(d);
    let class = (alpha / nd).sqrt();
    let pair = ((T::one() - alpha) / (nd * T::from_count(d - 1))).sqrt();
    (class, pair)
}

fn view_columns(dims: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    dims.iter()
        .map(|&p| {
            let r = start..start + p;
            start += p;
            r
        })
        .collect()
}

/// Augmented system for fully observed data (every view and label present).
pub fn build_augmented<T: Scalar>(
    ds: &MultiViewDataset<T>,
    scores: &ScoreMatrix<T>,
    alpha: T,
) -> Result<AugmentedSystem<T>> {
    check_alpha(alpha)?;
    if !ds.is_complete() {
        return Err(JacaError::InvalidDataset(
            "complete-data system requires every view and label; use the semi-supervised builder".into(),
        ));
    }
    let n = ds.n_subjects();
    if scores.subjects != (0..n).collect::<Vec<_>>() {
        return Err(JacaError::DimensionMismatch(
            "score matrix rows must follow dataset subject order".into(),
        ));
    }
    let nv = ds.n_views();
    let k1 = scores.scores.ncols();
    let dims = ds.view_dims();
    let cols = view_columns(&dims);
    let pairs = view_pairs(nv);
    let total_rows = n * (nv + pairs.len());
    let (c_class, c_pair) = block_scales(alpha, n, nv);

    let mut design = DMatrix::zeros(total_rows, cols[nv - 1].end);
    let mut response = DMatrix::zeros(total_rows, k1);
    let mut blocks = Vec::with_capacity(nv + pairs.len());
    let subjects: Vec<usize> = (0..n).collect();
    let mut row = 0;
    for d in 0..nv {
        design
            .view_mut((row, cols[d].start), (n, dims[d]))
            .copy_from(&(ds.view(d) * c_class));
        response
            .view_mut((row, 0), (n, k1))
            .copy_from(&(&scores.scores * c_class));
        blocks.push(RowBlock {
            origin: BlockOrigin::Classification(d),
            rows: row..row + n,
            subjects: subjects.clone(),
        });
        row += n;
    }
    for &(d, l) in &pairs {
        design
            .view_mut((row, cols[d].start), (n, dims[d]))
            .copy_from(&(ds.view(d) * c_pair));
        design
            .view_mut((row, cols[l].start), (n, dims[l]))
            .copy_from(&(ds.view(l) * -c_pair));
        blocks.push(RowBlock {
            origin: BlockOrigin::Pair(d, l),
            rows: row..row + n,
            subjects: subjects.clone(),
        });
        row += n;
    }
    Ok(AugmentedSystem {
        design,
        response,
        blocks,
        view_columns: cols,
        alpha,
        n_subjects: n,
    })
}

/// Augmented system for block-missing data: classification block `d` keeps
/// the subjects labeled and observed in view `d`, pair block `(d, l)` the
/// subjects observing both views. Scaling uses the total subject count.
pub fn build_augmented_ss<T: Scalar>(
    ds: &MultiViewDataset<T>,
    scores: &ScoreMatrix<T>,
    patterns: &MissingPatternSets,
    alpha: T,
) -> Result<AugmentedSystem<T>> {
    check_alpha(alpha)?;
    let n = ds.n_subjects();
    let nv = ds.n_views();
    let k1 = scores.scores.ncols();
    let dims = ds.view_dims();
    let cols = view_columns(&dims);
    let lookup = scores.row_lookup(n);
    let (c_class, c_pair) = block_scales(alpha, n, nv);
    let include_pairs = alpha < T::one();

    for d in 0..nv {
        let in_class = !patterns.classification[d].is_empty();
        let in_pair = include_pairs
            && patterns
                .pairs
                .iter()
                .any(|((a, b), rows)| (*a == d || *b == d) && !rows.is_empty());
        if !in_class && !in_pair {
            return Err(JacaError::UnusedView(d + 1));
        }
    }
    for &i in patterns.classification.iter().flatten() {
        if lookup[i].is_none() {
            return Err(JacaError::DimensionMismatch(format!(
                "subject `{}` enters a classification block but has no score row",
                ds.subject_ids()[i]
            )));
        }
    }

    let total_rows: usize = patterns.classification.iter().map(Vec::len).sum::<usize>()
        + patterns.pairs.iter().map(|(_, r)| r.len()).sum::<usize>();
    let mut design = DMatrix::zeros(total_rows, cols[nv - 1].end);
    let mut response = DMatrix::zeros(total_rows, k1);
    let mut blocks = Vec::with_capacity(nv + patterns.pairs.len());
    let mut row = 0;
    for d in 0..nv {
        let members = &patterns.classification[d];
        let x = ds.view(d);
        for (r, &i) in members.iter().enumerate() {
            for (j, c) in cols[d].clone().enumerate() {
                design[(row + r, c)] = x[(i, j)] * c_class;
            }
            let s = lookup[i].unwrap();
            for k in 0..k1 {
                response[(row + r, k)] = scores.scores[(s, k)] * c_class;
            }
        }
        blocks.push(RowBlock {
            origin: BlockOrigin::Classification(d),
            rows: row..row + members.len(),
            subjects: members.clone(),
        });
        row += members.len();
    }
    for ((d, l), members) in &patterns.pairs {
        let (d, l) = (*d, *l);
        let (xd, xl) = (ds.view(d), ds.view(l));
        for (r, &i) in members.iter().enumerate() {
            for (j, c) in cols[d].clone().enumerate() {
                design[(row + r, c)] = xd[(i, j)] * c_pair;
            }
            for (j, c) in cols[l].clone().enumerate() {
                design[(row + r, c)] = xl[(i, j)] * -c_pair;
            }
        }
        blocks.push(RowBlock {
            origin: BlockOrigin::Pair(d, l),
            rows: row..row + members.len(),
            subjects: members.clone(),
        });
        row += members.len();
    }
    Ok(AugmentedSystem {
        design,
        response,
        blocks,
        view_columns: cols,
        alpha,
        n_subjects: n,
    })
}

/// Chooses the complete-data builder when nothing is missing, the
/// block-missing builder otherwise.
pub fn build_system<T: Scalar>(ds: &MultiViewDataset<T>, alpha: T) -> Result<AugmentedSystem<T>> {
    let scores = ScoreMatrix::for_training(ds)?;
    if ds.is_complete() {
        build_augmented(ds, &scores, alpha)
    } else {
        let patterns = crate::dataset::missing_patterns(ds);
        build_augmented_ss(ds, &scores, &patterns, alpha)
    }
}
