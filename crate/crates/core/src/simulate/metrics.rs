use nalgebra::DMatrix;

use crate::dataset::view_pairs;
use crate::scalar::Scalar;
use crate::solver::CoefficientBlocks;

use super::SimulationTruth;

/// `(‖W_aᵀΣ_ab W_b‖²_F / (‖W_aᵀΣ_a W_a‖_F ‖W_bᵀΣ_b W_b‖_F))^{1/2}`, `0` when a
/// denominator factor vanishes.
pub fn cor_sigma<T: Scalar>(
    wa: &DMatrix<T>,
    wb: &DMatrix<T>,
    s_ab: &DMatrix<T>,
    s_a: &DMatrix<T>,
    s_b: &DMatrix<T>,
) -> T {
    let da = wa.tr_mul(&(s_a * wa)).norm();
    let db = wb.tr_mul(&(s_b * wb)).norm();
    if da == T::zero() || db == T::zero() {
        return T::zero();
    }
    let num = wa.tr_mul(&(s_ab * wb)).norm_squared();
    (num / (da * db)).sqrt()
}

/// `Σ_{d<l} Cor_Σ(W_d, W_l)` under the population covariances. `w` must be on
/// the scale of the generated features.
pub fn sum_correlation<T: Scalar>(w: &CoefficientBlocks<T>, truth: &SimulationTruth<T>) -> T {
    let marginals: Vec<DMatrix<T>> = (0..truth.n_views()).map(|d| truth.marginal_cov(d)).collect();
    view_pairs(truth.n_views())
        .into_iter()
        .map(|(d, l)| {
            cor_sigma(
                w.block(d),
                w.block(l),
                &truth.cross_cov(d, l),
                &marginals[d],
                &marginals[l],
            )
        })
        .fold(T::zero(), |a, b| a + b)
}

/// `Cor_Σ(W_d, Θ_d)` with `Σ̃_d` weighting, where `Θ_d = B_d`.
pub fn estimation_correlation<T: Scalar>(w_d: &DMatrix<T>, truth: &SimulationTruth<T>, d: usize) -> T {
    let s = &truth.sigma_tilde[d];
    cor_sigma(w_d, &truth.class_loadings[d], s, s, s).min(T::one())
}

/// Precision and recall of the nonzero rows of `w_d` against `support`;
/// precision is `1` when nothing is selected.
pub fn precision_recall<T: Scalar>(w_d: &DMatrix<T>, support: &[usize]) -> (f64, f64) {
    let selected: Vec<usize> = w_d
        .row_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != T::zero()))
        .map(|(j, _)| j)
        .collect();
    let hits = selected.iter().filter(|j| support.contains(j)).count();
    let precision = if selected.is_empty() {
        1.0
    } else {
        hits as f64 / selected.len() as f64
    };
    let recall = if support.is_empty() {
        1.0
    } else {
        hits as f64 / support.len() as f64
    };
    (precision, recall)
}
