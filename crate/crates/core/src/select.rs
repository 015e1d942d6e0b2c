//! Cross-validated choice of `(ρ, ε)` with `λ_d = ε·λ_max,d`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::build_system;
use crate::dataset::{build_score_matrix, center_columns, standardize, view_pairs, MultiViewDataset};
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;
use crate::solver::{fit, CoefficientBlocks, SolverConfig};

/// Square root of the RV coefficient of the column-centered inputs.
///
/// `RV(X, Y) = ‖XᵀY‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F)`; the result is `0` when either
/// centered matrix vanishes.
pub fn rv_correlation<T: Scalar>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<T> {
    if x.nrows() != y.nrows() {
        return Err(JacaError::DimensionMismatch(format!(
            "rv_correlation: {} rows vs {} rows",
            x.nrows(),
            y.nrows()
        )));
    }
    let x = center_columns(x);
    let y = center_columns(y);
    let xx = x.tr_mul(&x).norm();
    let yy = y.tr_mul(&y).norm();
    if xx == T::zero() || yy == T::zero() {
        return Ok(T::zero());
    }
    let rv = x.tr_mul(&y).norm_squared() / (xx * yy);
    Ok(rv.sqrt().min(T::one()))
}

/// Held-out value of
/// `α Σ_d rv(Ỹ, X_d W_d) + (1−α)/(D−1) Σ_{d<l} rv(X_d W_d, X_l W_l)`.
///
/// `heldout` must already carry the training standardization. The
/// classification term of view `d` uses held-out subjects with a label and view
/// `d`; its `Ỹ` is rebuilt over the classes those subjects cover. Terms with
/// fewer than two subjects (or fewer than two classes) contribute nothing.
pub fn cv_criterion<T: Scalar>(
    heldout: &MultiViewDataset<T>,
    w: &CoefficientBlocks<T>,
    alpha: T,
) -> Result<T> {
    let n_views = heldout.n_views();
    if w.n_views() != n_views || w.dims() != heldout.view_dims() {
        return Err(JacaError::DimensionMismatch(format!(
            "coefficients {:?} do not match held-out views {:?}",
            w.dims(),
            heldout.view_dims()
        )));
    }
    let mut class_part = T::zero();
    for d in 0..n_views {
        let rows: Vec<usize> = (0..heldout.n_subjects())
            .filter(|&i| heldout.is_present(i, d) && heldout.label(i).is_some())
            .collect();
        let Some(scores) = heldout_scores(heldout, &rows)? else {
            continue;
        };
        let proj = heldout.view(d).select_rows(&rows) * w.block(d);
        class_part += rv_correlation(&scores, &proj)?;
    }
    let mut pair_part = T::zero();
    for (d, l) in view_pairs(n_views) {
        let rows: Vec<usize> = (0..heldout.n_subjects())
            .filter(|&i| heldout.is_present(i, d) && heldout.is_present(i, l))
            .collect();
        if rows.len() < 2 {
            continue;
        }
        let pd = heldout.view(d).select_rows(&rows) * w.block(d);
        let pl = heldout.view(l).select_rows(&rows) * w.block(l);
        pair_part += rv_correlation(&pd, &pl)?;
    }
    Ok(alpha * class_part + (T::one() - alpha) / T::from_count(n_views - 1) * pair_part)
}

fn heldout_scores<T: Scalar>(ds: &MultiViewDataset<T>, rows: &[usize]) -> Result<Option<DMatrix<T>>> {
    if rows.len() < 2 {
        return Ok(None);
    }
    let mut remap = vec![None; ds.n_classes()];
    rows.iter().for_each(|&i| remap[ds.label(i).expect("rows are labeled")] = Some(0));
    let mut present = 0;
    for slot in remap.iter_mut().flatten() {
        *slot = present;
        present += 1;
    }
    if present < 2 {
        return Ok(None);
    }
    let labels: Vec<usize> = rows
        .iter()
        .map(|&i| remap[ds.label(i).unwrap()].unwrap())
        .collect();
    Ok(Some(build_score_matrix(&labels, present)?.scores))
}

/// Fold index for every subject.
///
/// Subjects are grouped by presence signature (views present, label present);
/// each group is shuffled and dealt round-robin, continuing the rotation from
/// the previous group so fold sizes stay balanced overall.
pub fn stratified_folds<T: Scalar>(ds: &MultiViewDataset<T>, n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(JacaError::InvalidParameter(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    let mut strata: BTreeMap<(Vec<bool>, bool), Vec<usize>> = BTreeMap::new();
    for i in 0..ds.n_subjects() {
        strata
            .entry((ds.presence()[i].clone(), ds.label(i).is_some()))
            .or_default()
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; ds.n_subjects()];
    let mut offset = 0;
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            folds[i] = (offset + r) % n_folds;
        }
        offset = (offset + members.len()) % n_folds;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CVConfig<T: Scalar> {
    pub n_folds: usize,
    /// Ascending, within `[0, 1]`.
    pub rho_grid: Vec<T>,
    /// Descending, within `[1e−4, 1]`.
    pub epsilon_grid: Vec<T>,
    pub alpha: T,
    pub seed: u64,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for CVConfig<T> {
    fn default() -> Self {
        Self {
            n_folds: 5,
            rho_grid: default_rho_grid(),
            epsilon_grid: default_epsilon_grid(),
            alpha: T::lit(0.5),
            seed: 0,
            tol: T::lit(T::DEFAULT_TOL),
            max_iter: 1000,
        }
    }
}

pub fn default_rho_grid<T: Scalar>() -> Vec<T> {
    [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&r| T::lit(r)).collect()
}

/// Twenty log-spaced values from `1` down to `1e−4`.
pub fn default_epsilon_grid<T: Scalar>() -> Vec<T> {
    log_grid(1.0, 1e-4, 20)
}

/// `n` log-spaced values from `hi` down to `lo`; endpoints are exact.
pub fn log_grid<T: Scalar>(hi: f64, lo: f64, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![T::lit(hi)],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    T::lit(hi)
                } else if i == n - 1 {
                    T::lit(lo)
                } else {
                    let t = i as f64 / (n - 1) as f64;
                    T::lit((hi.ln() + t * (lo.ln() - hi.ln())).exp())
                }
            })
            .collect(),
    }
}

impl<T: Scalar> CVConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JacaError::InvalidParameter(m));
        if self.n_folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.n_folds));
        }
        if self.rho_grid.is_empty() || self.epsilon_grid.is_empty() {
            return bad("grids must be nonempty".into());
        }
        if self.rho_grid.iter().any(|&r| !(r >= T::zero() && r <= T::one())) {
            return bad("rho values must lie in [0, 1]".into());
        }
        if self.rho_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("rho grid must be strictly ascending".into());
        }
        let lo = T::lit(1e-4);
        if self.epsilon_grid.iter().any(|&e| !(e >= lo && e <= T::one())) {
            return bad("epsilon values must lie in [1e-4, 1]".into());
        }
        if self.epsilon_grid.windows(2).any(|w| !(w[0] > w[1])) {
            return bad("epsilon grid must be strictly descending".into());
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.tol > T::zero()) || self.max_iter == 0 {
            return bad("tol must be positive and max_iter at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CVResult<T: Scalar> {
    pub rho_grid: Vec<T>,
    pub epsilon_grid: Vec<T>,
    /// Fold-averaged criterion, rows over `ρ`, columns over `ε`; `−∞` marks a
    /// cell where some fold failed.
    pub criterion: DMatrix<T>,
    /// `fold_criterion[f]` is the per-fold analogue of `criterion`.
    pub fold_criterion: Vec<DMatrix<T>>,
    pub best_rho: T,
    pub best_epsilon: T,
    pub best_criterion: T,
    /// `λ_max` of each training split.
    pub fold_lambda_max: Vec<Vec<T>>,
    pub folds: Vec<usize>,
}

struct Split<T: Scalar> {
    system: crate::augment::AugmentedSystem<T>,
    heldout: MultiViewDataset<T>,
    lambda_max: Vec<T>,
}

fn prepare_split<T: Scalar>(ds: &MultiViewDataset<T>, folds: &[usize], f: usize, alpha: T) -> Result<Split<T>> {
    let train: Vec<usize> = (0..ds.n_subjects()).filter(|&i| folds[i] != f).collect();
    let test: Vec<usize> = (0..ds.n_subjects()).filter(|&i| folds[i] == f).collect();
    let train = ds.subset(&train);
    train.check_trainable()?;
    let (train, transforms) = standardize(&train)?;
    let system = build_system(&train, alpha)?;
    let lambda_max = system.lambda_max();
    let heldout = ds.subset(&test).apply_transforms(&transforms)?;
    Ok(Split {
        system,
        heldout,
        lambda_max,
    })
}

fn path_criteria<T: Scalar>(split: &Split<T>, rho: T, cfg: &CVConfig<T>) -> Vec<T> {
    let mut warm: Option<CoefficientBlocks<T>> = None;
    let mut out = Vec::with_capacity(cfg.epsilon_grid.len());
    for &eps in &cfg.epsilon_grid {
        let lambda = split.lambda_max.iter().map(|&l| eps * l).collect();
        let mut solver = SolverConfig::new(rho, lambda)
            .with_tol(cfg.tol)
            .with_max_iter(cfg.max_iter);
        if let Some(w) = warm.take() {
            solver = solver.with_init(w);
        }
        let value = fit(&split.system, &solver).and_then(|r| {
            let v = cv_criterion(&split.heldout, &r.coefficients, cfg.alpha)?;
            warm = Some(r.coefficients);
            Ok(v)
        });
        out.push(match value {
            Ok(v) if v.finite() => v,
            _ => T::lit(f64::NEG_INFINITY),
        });
    }
    out
}

/// Grid search over `(ρ, ε)`; each `(fold, ρ)` path runs in parallel on the
/// current rayon pool, walking `ε` from largest to smallest with warm starts.
pub fn cross_validate<T: Scalar>(ds: &MultiViewDataset<T>, cfg: &CVConfig<T>) -> Result<CVResult<T>> {
    cfg.validate()?;
    ds.check_trainable()?;
    if cfg.n_folds > ds.n_subjects() {
        return Err(JacaError::InvalidParameter(format!(
            "{} folds for {} subjects",
            cfg.n_folds,
            ds.n_subjects()
        )));
    }
    let folds = stratified_folds(ds, cfg.n_folds, cfg.seed)?;
    let splits: Vec<Option<Split<T>>> = (0..cfg.n_folds)
        .into_par_iter()
        .map(|f| prepare_split(ds, &folds, f, cfg.alpha).ok())
        .collect();

    let n_rho = cfg.rho_grid.len();
    let n_eps = cfg.epsilon_grid.len();
    let neg_inf = T::lit(f64::NEG_INFINITY);
    let tasks: Vec<(usize, usize)> = (0..cfg.n_folds)
        .flat_map(|f| (0..n_rho).map(move |r| (f, r)))
        .collect();
    let paths: Vec<Vec<T>> = tasks
        .par_iter()
        .map(|&(f, r)| match &splits[f] {
            Some(split) => path_criteria(split, cfg.rho_grid[r], cfg),
            None => vec![neg_inf; n_eps],
        })
        .collect();

    let mut fold_criterion = vec![DMatrix::from_element(n_rho, n_eps, neg_inf); cfg.n_folds];
    for (&(f, r), values) in tasks.iter().zip(&paths) {
        for (e, &v) in values.iter().enumerate() {
            fold_criterion[f][(r, e)] = v;
        }
    }
    let folds_t = T::from_count(cfg.n_folds);
    let criterion = DMatrix::from_fn(n_rho, n_eps, |r, e| {
        let mut sum = T::zero();
        for fc in &fold_criterion {
            let v = fc[(r, e)];
            if !v.finite() {
                return neg_inf;
            }
            sum += v;
        }
        sum / folds_t
    });

    // ties resolve toward larger ε, then larger ρ
    let mut best: Option<(usize, usize)> = None;
    for e in 0..n_eps {
        for r in (0..n_rho).rev() {
            let v = criterion[(r, e)];
            if !v.finite() {
                continue;
            }
            if best.is_none_or(|(br, be)| v > criterion[(br, be)]) {
                best = Some((r, e));
            }
        }
    }
    let Some((br, be)) = best else {
        return Err(JacaError::InvalidDataset(
            "every cross-validation cell failed".into(),
        ));
    };
    Ok(CVResult {
        rho_grid: cfg.rho_grid.clone(),
        epsilon_grid: cfg.epsilon_grid.clone(),
        best_rho: cfg.rho_grid[br],
        best_epsilon: cfg.epsilon_grid[be],
        best_criterion: criterion[(br, be)],
        criterion,
        fold_criterion,
        fold_lambda_max: splits
            .iter()
            .map(|s| s.as_ref().map_or_else(Vec::new, |s| s.lambda_max.clone()))
            .collect(),
        folds,
    })
}

/// Writes `rho,epsilon,fold,criterion` rows (folds 1-based).
pub fn write_cv_report<T: Scalar>(path: &Path, result: &CVResult<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rho", "epsilon", "fold", "criterion"])?;
    for (f, fc) in result.fold_criterion.iter().enumerate() {
        for (r, rho) in result.rho_grid.iter().enumerate() {
            for (e, eps) in result.epsilon_grid.iter().enumerate() {
                w.write_record([
                    rho.as_f64().to_string(),
                    eps.as_f64().to_string(),
                    (f + 1).to_string(),
                    fc[(r, e)].as_f64().to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CVSummary {
    pub alpha: f64,
    pub n_folds: usize,
    pub best_rho: f64,
    pub best_epsilon: f64,
    /// `null` only if serialization meets a non-finite value.
    pub best_criterion: Option<f64>,
    pub rho_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    /// Mean criterion per `ρ` row; failed cells are `null`.
    pub criterion: Vec<Vec<Option<f64>>>,
    pub fold_lambda_max: Vec<Vec<f64>>,
}

impl CVSummary {
    pub fn new<T: Scalar>(result: &CVResult<T>, alpha: T) -> Self {
        let finite = |v: T| Some(v.as_f64()).filter(|x| x.is_finite());
        Self {
            alpha: alpha.as_f64(),
            n_folds: result.fold_criterion.len(),
            best_rho: result.best_rho.as_f64(),
            best_epsilon: result.best_epsilon.as_f64(),
            best_criterion: finite(result.best_criterion),
            rho_grid: result.rho_grid.iter().map(|v| v.as_f64()).collect(),
            epsilon_grid: result.epsilon_grid.iter().map(|v| v.as_f64()).collect(),
            criterion: result
                .criterion
                .row_iter()
                .map(|row| row.iter().map(|&v| finite(v)).collect())
                .collect(),
            fold_lambda_max: result
                .fold_lambda_max
                .iter()
                .map(|l| l.iter().map(|v| v.as_f64()).collect())
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}
