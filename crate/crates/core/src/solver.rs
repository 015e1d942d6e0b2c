//! Block-coordinate descent for the elastic-net JACA problem
//!
//! ```text
//! ½‖Y′ − X′W‖²_F − (ρ/2)‖X′W‖²_F + (ρ/2)‖W‖²_F + Σ_d λ_d Σ_j ‖w_dj‖₂
//! ```
//!
//! Each row `w_dj` is updated in closed form by vector soft-thresholding while
//! the scaled residual `R = Y′ − (1−ρ)X′W` is maintained incrementally.

use nalgebra::DMatrix;

use crate::augment::{l2, AugmentedSystem};
use crate::dataset::{MissingPatternSets, MultiViewDataset, ScoreMatrix, StandardizationTransform};
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;

/// Per-view coefficient blocks `W_d` (`p_d × (K−1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlocks<T: Scalar> {
    blocks: Vec<DMatrix<T>>,
}

impl<T: Scalar> CoefficientBlocks<T> {
    pub fn new(blocks: Vec<DMatrix<T>>) -> Result<Self> {
        if let Some(b) = blocks.first() {
            if blocks.iter().any(|m| m.ncols() != b.ncols()) {
                return Err(JacaError::DimensionMismatch(
                    "coefficient blocks must share a column count".into(),
                ));
            }
        }
        Ok(Self { blocks })
    }

    pub fn zeros(dims: &[usize], n_responses: usize) -> Self {
        Self {
            blocks: dims.iter().map(|&p| DMatrix::zeros(p, n_responses)).collect(),
        }
    }

    /// Splits a stacked `P × (K−1)` matrix into view blocks.
    pub fn from_stacked(w: &DMatrix<T>, dims: &[usize]) -> Result<Self> {
        if dims.iter().sum::<usize>() != w.nrows() {
            return Err(JacaError::DimensionMismatch(format!(
                "stacked matrix has {} rows, views need {}",
                w.nrows(),
                dims.iter().sum::<usize>()
            )));
        }
        let mut start = 0;
        let blocks = dims
            .iter()
            .map(|&p| {
                let b = w.rows(start, p).into_owned();
                start += p;
                b
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn stacked(&self) -> DMatrix<T> {
        let rows: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::zeros(rows, self.n_responses());
        let mut start = 0;
        for b in &self.blocks {
            out.rows_mut(start, b.nrows()).copy_from(b);
            start += b.nrows();
        }
        out
    }

    pub fn n_views(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_responses(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn block(&self, d: usize) -> &DMatrix<T> {
        &self.blocks[d]
    }

    pub fn block_mut(&mut self, d: usize) -> &mut DMatrix<T> {
        &mut self.blocks[d]
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    /// Rows of `W_d` with nonzero ℓ2 norm.
    pub fn support(&self, d: usize) -> Vec<usize> {
        self.blocks[d]
            .row_iter()
            .enumerate()
            .filter(|(_, r)| r.iter().any(|&v| v != T::zero()))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn cardinality(&self, d: usize) -> usize {
        self.support(d).len()
    }

    pub fn total_cardinality(&self) -> usize {
        (0..self.n_views()).map(|d| self.cardinality(d)).sum()
    }

    /// Coefficients for unstandardized features, `diag(1/scale)·W_d`.
    pub fn unstandardize(&self, transforms: &[StandardizationTransform<T>]) -> Result<Self> {
        if transforms.len() != self.n_views()
            || transforms.iter().zip(&self.blocks).any(|(t, b)| t.dim() != b.nrows())
        {
            return Err(JacaError::DimensionMismatch(
                "transforms do not match coefficient blocks".into(),
            ));
        }
        Ok(Self {
            blocks: self
                .blocks
                .iter()
                .zip(transforms)
                .map(|(b, t)| t.unscale_coefficients(b))
                .collect(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|&v| v == T::zero()))
    }
}

/// Block-coordinate descent settings.
///
/// `tol` is the absolute objective change per full sweep below which the fit
/// stops (once the KKT residual also drops below `10·tol`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T: Scalar> {
    pub rho: T,
    pub lambda: Vec<T>,
    pub tol: T,
    pub max_iter: usize,
    pub init: Option<CoefficientBlocks<T>>,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(rho: T, lambda: Vec<T>) -> Self {
        Self {
            rho,
            lambda,
            tol: T::lit(T::DEFAULT_TOL),
            max_iter: 1000,
            init: None,
        }
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_init(mut self, init: CoefficientBlocks<T>) -> Self {
        self.init = Some(init);
        self
    }

    fn validate(&self, sys: &AugmentedSystem<T>) -> Result<()> {
        check_rho_lambda(sys, self.rho, &self.lambda)?;
        if !(self.tol > T::zero()) {
            return Err(JacaError::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(JacaError::InvalidParameter("max_iter must be at least 1".into()));
        }
        if let Some(w) = &self.init {
            check_dims(sys, w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Scalar> {
    pub coefficients: CoefficientBlocks<T>,
    /// Objective before the first sweep, then after every sweep.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: T,
}

impl<T: Scalar> FitResult<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

fn check_rho_lambda<T: Scalar>(sys: &AugmentedSystem<T>, rho: T, lambda: &[T]) -> Result<()> {
    if !(rho >= T::zero() && rho <= T::one()) {
        return Err(JacaError::InvalidParameter(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    if lambda.len() != sys.n_views() {
        return Err(JacaError::DimensionMismatch(format!(
            "{} penalties for {} views",
            lambda.len(),
            sys.n_views()
        )));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= T::zero()) || !l.finite()) {
        return Err(JacaError::InvalidParameter(format!(
            "penalties must be finite and nonnegative, got {l}"
        )));
    }
    Ok(())
}

fn check_dims<T: Scalar>(sys: &AugmentedSystem<T>, w: &CoefficientBlocks<T>) -> Result<()> {
    if w.dims() != sys.view_dims() || w.n_responses() != sys.n_responses() {
        return Err(JacaError::DimensionMismatch(format!(
            "coefficients {:?}×{} do not match system {:?}×{}",
            w.dims(),
            w.n_responses(),
            sys.view_dims(),
            sys.n_responses()
        )));
    }
    Ok(())
}

/// `max(0, 1 − λ/‖v‖₂)·v`; the zero vector when `‖v‖₂ ≤ λ`.
pub fn soft_threshold<T: Scalar>(v: &[T], lambda: T) -> Vec<T> {
    let norm = l2(v);
    if norm <= lambda || norm == T::zero() {
        return vec![T::zero(); v.len()];
    }
    let shrink = T::one() - lambda / norm;
    v.iter().map(|&x| x * shrink).collect()
}

/// `λ_max,d = (α/(nD))·‖X_dᵀỸ‖_{∞,2}` over the classified rows of each view.
///
/// `ds` must be standardized; `n` is the total subject count. A view with no
/// classified rows gets `0`.
pub fn lambda_max<T: Scalar>(
    ds: &MultiViewDataset<T>,
    scores: &ScoreMatrix<T>,
    patterns: &MissingPatternSets,
    alpha: T,
) -> Vec<T> {
    let n = ds.n_subjects();
    let scale = alpha / (T::from_count(n) * T::from_count(ds.n_views()));
    let lookup = scores.row_lookup(n);
    (0..ds.n_views())
        .map(|d| {
            let rows = &patterns.classification[d];
            let x = ds.view(d);
            let mut best = T::zero();
            for j in 0..x.ncols() {
                let mut acc = vec![T::zero(); scores.scores.ncols()];
                for &i in rows {
                    let Some(s) = lookup[i] else { continue };
                    for (k, a) in acc.iter_mut().enumerate() {
                        *a += x[(i, j)] * scores.scores[(s, k)];
                    }
                }
                best = best.max(l2(&acc));
            }
            scale * best
        })
        .collect()
}

fn group_penalty<T: Scalar>(w: &CoefficientBlocks<T>, lambda: &[T]) -> T {
    w.blocks()
        .iter()
        .zip(lambda)
        .map(|(b, &l)| {
            l * b
                .row_iter()
                .map(|r| r.norm())
                .fold(T::zero(), |a, x| a + x)
        })
        .fold(T::zero(), |a, x| a + x)
}

/// `½‖Y′−X′W‖² − (ρ/2)‖X′W‖² + (ρ/2)‖W‖²`, the differentiable part.
pub fn smooth_objective<T: Scalar>(sys: &AugmentedSystem<T>, w: &CoefficientBlocks<T>, rho: T) -> Result<T> {
    check_dims(sys, w)?;
    let ws = w.stacked();
    let fitted = sys.design() * &ws;
    let half = T::lit(0.5);
    Ok(half * (sys.response() - &fitted).norm_squared() - half * rho * fitted.norm_squared()
        + half * rho * ws.norm_squared())
}

/// Full penalized objective.
pub fn objective<T: Scalar>(
    sys: &AugmentedSystem<T>,
    w: &CoefficientBlocks<T>,
    rho: T,
    lambda: &[T],
) -> Result<T> {
    check_rho_lambda(sys, rho, lambda)?;
    Ok(smooth_objective(sys, w, rho)? + group_penalty(w, lambda))
}

/// Gradient of [`smooth_objective`]: `(1−ρ)X′ᵀX′W + ρW − X′ᵀY′`, stacked `P × (K−1)`.
pub fn smooth_gradient<T: Scalar>(
    sys: &AugmentedSystem<T>,
    w: &CoefficientBlocks<T>,
    rho: T,
) -> Result<DMatrix<T>> {
    check_dims(sys, w)?;
    let ws = w.stacked();
    let x = sys.design();
    let fitted = x * &ws;
    Ok(x.tr_mul(&fitted) * (T::one() - rho) + &ws * rho - x.tr_mul(sys.response()))
}

/// Largest violation of the optimality conditions over all rows `(d, j)`:
/// `‖g_dj + λ_d w_dj/‖w_dj‖‖` for nonzero rows and `max(0, ‖g_dj‖ − λ_d)` for zero rows,
/// with `g` the smooth gradient.
pub fn kkt_residual<T: Scalar>(
    sys: &AugmentedSystem<T>,
    w: &CoefficientBlocks<T>,
    rho: T,
    lambda: &[T],
) -> Result<T> {
    check_rho_lambda(sys, rho, lambda)?;
    let g = smooth_gradient(sys, w, rho)?;
    let ws = w.stacked();
    let mut worst = T::zero();
    for (d, cols) in sys.view_columns().iter().enumerate() {
        for j in cols.clone() {
            let gj = g.row(j);
            let wj = ws.row(j);
            let wn = wj.norm();
            let v = if wn > T::zero() {
                (gj + wj * (lambda[d] / wn)).norm()
            } else {
                (gj.norm() - lambda[d]).max(T::zero())
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Smooth objective from the maintained residual `R = Y′ − (1−ρ)X′W`:
/// `½‖Y′‖² − ⟨X′ᵀY′, W⟩ + ‖Y′−R‖²/(2(1−ρ)) + (ρ/2)‖W‖²` (the third term drops at `ρ = 1`).
fn smooth_from_residual<T: Scalar>(
    y_norm_sq: T,
    cross: &DMatrix<T>,
    response: &DMatrix<T>,
    residual: &DMatrix<T>,
    w: &DMatrix<T>,
    rho: T,
) -> T {
    let half = T::lit(0.5);
    let mut value = half * y_norm_sq - cross.dot(w) + half * rho * w.norm_squared();
    if rho < T::one() {
        value += (response - residual).norm_squared() * half / (T::one() - rho);
    }
    value
}

/// Solves the problem by cyclic block-coordinate descent over rows, views in
/// order and rows in order within each view.
///
/// With `ρ = 0` the minimizer need not be unique; the returned point is
/// whichever one the sweeps reach, certified by the KKT residual.
pub fn fit<T: Scalar>(sys: &AugmentedSystem<T>, cfg: &SolverConfig<T>) -> Result<FitResult<T>> {
    cfg.validate(sys)?;
    let x = sys.design();
    let y = sys.response();
    let rho = cfg.rho;
    let keep = T::one() - rho;
    let k1 = sys.n_responses();
    let dims = sys.view_dims();

    let mut w = match &cfg.init {
        Some(init) => init.stacked(),
        None => DMatrix::zeros(x.ncols(), k1),
    };
    let col_sq: Vec<T> = x.column_iter().map(|c| c.norm_squared()).collect();
    let cross = x.tr_mul(y);
    let y_norm_sq = y.norm_squared();
    let mut residual = if w.iter().all(|&v| v == T::zero()) {
        y.clone()
    } else {
        y - (x * &w) * keep
    };

    let penalty = |w: &DMatrix<T>| -> T {
        sys.view_columns()
            .iter()
            .zip(&cfg.lambda)
            .map(|(cols, &l)| l * cols.clone().map(|j| w.row(j).norm()).fold(T::zero(), |a, b| a + b))
            .fold(T::zero(), |a, b| a + b)
    };
    let eval = |w: &DMatrix<T>, r: &DMatrix<T>| {
        smooth_from_residual(y_norm_sq, &cross, y, r, w, rho) + penalty(w)
    };

    let mut trace = vec![eval(&w, &residual)];
    if !trace[0].finite() {
        return Err(JacaError::NonFinite("initial objective".into()));
    }
    let mut converged = false;
    let mut kkt = T::zero();
    let mut iterations = 0;
    let mut old = vec![T::zero(); k1];
    let mut step = vec![T::zero(); k1];

    while iterations < cfg.max_iter {
        iterations += 1;
        for (d, cols) in sys.view_columns().iter().enumerate() {
            let lambda = cfg.lambda[d];
            for j in cols.clone() {
                let curvature = keep * col_sq[j];
                let denom = curvature + rho;
                let col = x.column(j);
                for k in 0..k1 {
                    old[k] = w[(j, k)];
                    step[k] = col.dot(&residual.column(k)) + curvature * old[k];
                }
                let new = if denom > T::zero() {
                    soft_threshold(&step, lambda)
                        .into_iter()
                        .map(|v| v / denom)
                        .collect()
                } else {
                    vec![T::zero(); k1]
                };
                for k in 0..k1 {
                    let delta = old[k] - new[k];
                    if delta != T::zero() {
                        w[(j, k)] = new[k];
                        if keep > T::zero() {
                            residual.column_mut(k).axpy(keep * delta, &col, T::one());
                        }
                    }
                }
            }
        }
        let value = eval(&w, &residual);
        if !value.finite() {
            return Err(JacaError::NonFinite(format!("objective at sweep {iterations}")));
        }
        let change = (*trace.last().unwrap() - value).abs();
        trace.push(value);
        if change < cfg.tol {
            let current = CoefficientBlocks::from_stacked(&w, &dims)?;
            kkt = kkt_residual(sys, &current, rho, &cfg.lambda)?;
            if kkt <= cfg.tol * T::lit(10.0) {
                converged = true;
                break;
            }
            // refresh the residual so drift does not stall the certificate
            residual = y - (x * &w) * keep;
        }
    }
    let coefficients = CoefficientBlocks::from_stacked(&w, &dims)?;
    if !converged {
        kkt = kkt_residual(sys, &coefficients, rho, &cfg.lambda)?;
    }
    Ok(FitResult {
        coefficients,
        objective_trace: trace,
        iterations,
        converged,
        kkt_residual: kkt,
    })
}
