#![allow(dead_code)]

//! Random instances and a direct, augmentation-free evaluation of the JACA
//! objective shared by the integration tests.

use jaca::{build_score_matrix, CoefficientBlocks, Dataset, MultiViewDataset};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Labels in `0..k` with every class present; needs `n ≥ k`.
pub fn labels_covering(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        y.swap(i, rng.random_range(0..=i));
    }
    y
}

pub fn orthogonal(rng: &mut impl Rng, m: usize) -> DMatrix<f64> {
    gaussian(rng, m, m).qr().q()
}

pub fn complete_instance(rng: &mut impl Rng, n: usize, dims: &[usize], k: usize) -> Dataset {
    let views = dims.iter().map(|&p| gaussian(rng, n, p)).collect();
    Dataset::complete(views, labels_covering(rng, n, k), k).unwrap()
}

/// Block-missing instance: beyond the first `k` labeled, fully observed
/// subjects, each subject may drop its label or one view.
pub fn missing_instance(rng: &mut impl Rng, n: usize, dims: &[usize], k: usize) -> Dataset {
    let nv = dims.len();
    let labels = labels_covering(rng, n, k);
    let mut present = vec![vec![true; nv]; n];
    let mut lab: Vec<Option<usize>> = labels.iter().copied().map(Some).collect();
    let anchors: Vec<usize> = (0..k).map(|c| labels.iter().position(|&y| y == c).unwrap()).collect();
    for i in 0..n {
        if anchors.contains(&i) {
            continue;
        }
        match rng.random_range(0..4) {
            0 => lab[i] = None,
            1 => present[i][rng.random_range(0..nv)] = false,
            _ => {}
        }
    }
    let views = dims
        .iter()
        .enumerate()
        .map(|(d, &p)| {
            let mut x = gaussian(rng, n, p);
            for i in 0..n {
                if !present[i][d] {
                    x.row_mut(i).fill(f64::NAN);
                }
            }
            x
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{}", i + 1)).collect();
    let names = dims
        .iter()
        .enumerate()
        .map(|(d, &p)| (0..p).map(|j| format!("v{}_f{}", d + 1, j + 1)).collect())
        .collect();
    MultiViewDataset::new(views, present, lab, k, ids, names).unwrap()
}

/// Quadratic form of the smooth loss, `f(W) = ½tr(WᵀHW) − tr(BᵀW) + c`,
/// assembled subject by subject straight from the loss definition.
pub struct DirectLoss {
    pub dims: Vec<usize>,
    pub hessian: DMatrix<f64>,
    pub linear: DMatrix<f64>,
    pub constant: f64,
}

impl DirectLoss {
    pub fn new(ds: &Dataset, alpha: f64, rho: f64) -> Self {
        let n = ds.n_subjects();
        let nv = ds.n_views();
        let dims = ds.view_dims();
        let offs: Vec<usize> = dims.iter().scan(0, |s, &p| {
            let o = *s;
            *s += p;
            Some(o)
        }).collect();
        let total: usize = dims.iter().sum();

        let scored: Vec<usize> = (0..n).filter(|&i| ds.label(i).is_some() && ds.has_any_view(i)).collect();
        let labels: Vec<usize> = scored.iter().map(|&i| ds.label(i).unwrap()).collect();
        let y = build_score_matrix::<f64>(&labels, ds.n_classes()).unwrap().scores;
        let k1 = y.ncols();

        let c1 = alpha / (n * nv) as f64;
        let c2 = if nv > 1 { (1.0 - alpha) / ((n * nv * (nv - 1)) as f64) } else { 0.0 };
        let mut h = DMatrix::zeros(total, total);
        let mut b = DMatrix::zeros(total, k1);
        let mut constant = 0.0;
        for (r, &i) in scored.iter().enumerate() {
            for d in 0..nv {
                if !ds.is_present(i, d) {
                    continue;
                }
                let x = ds.view(d).row(i).transpose();
                let o = offs[d];
                let p = dims[d];
                let mut blk = h.view_mut((o, o), (p, p));
                blk += (&x * x.transpose()) * ((1.0 - rho) * c1);
                let mut bb = b.view_mut((o, 0), (p, k1));
                bb += &x * y.row(r) * c1;
                constant += 0.5 * c1 * y.row(r).norm_squared();
            }
        }
        for i in 0..n {
            for d in 0..nv {
                for l in d + 1..nv {
                    if !(ds.is_present(i, d) && ds.is_present(i, l)) {
                        continue;
                    }
                    let xd = ds.view(d).row(i).transpose();
                    let xl = ds.view(l).row(i).transpose();
                    let s = (1.0 - rho) * c2;
                    let (od, ol) = (offs[d], offs[l]);
                    let (pd, pl) = (dims[d], dims[l]);
                    let mut dd = h.view_mut((od, od), (pd, pd));
                    dd += (&xd * xd.transpose()) * s;
                    let mut ll = h.view_mut((ol, ol), (pl, pl));
                    ll += (&xl * xl.transpose()) * s;
                    let mut dl = h.view_mut((od, ol), (pd, pl));
                    dl -= (&xd * xl.transpose()) * s;
                    let mut ld = h.view_mut((ol, od), (pl, pd));
                    ld -= (&xl * xd.transpose()) * s;
                }
            }
        }
        for j in 0..total {
            h[(j, j)] += rho;
        }
        Self { dims, hessian: h, linear: b, constant }
    }

    pub fn smooth(&self, w: &DMatrix<f64>) -> f64 {
        0.5 * (w.transpose() * &self.hessian * w).trace() - (self.linear.transpose() * w).trace() + self.constant
    }

    pub fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        &self.hessian * w - &self.linear
    }

    pub fn penalty(&self, w: &DMatrix<f64>, lambda: &[f64]) -> f64 {
        let mut row = 0;
        let mut total = 0.0;
        for (d, &p) in self.dims.iter().enumerate() {
            for j in row..row + p {
                total += lambda[d] * w.row(j).norm();
            }
            row += p;
        }
        total
    }

    pub fn objective(&self, w: &DMatrix<f64>, lambda: &[f64]) -> f64 {
        self.smooth(w) + self.penalty(w, lambda)
    }

    /// `max_j ‖∇f(0)_j‖` per view: the zero solution is optimal iff `λ_d` reaches it.
    pub fn lambda_max(&self) -> Vec<f64> {
        let mut row = 0;
        self.dims
            .iter()
            .map(|&p| {
                let m = (row..row + p).map(|j| self.linear.row(j).norm()).fold(0.0, f64::max);
                row += p;
                m
            })
            .collect()
    }

    /// Accelerated proximal gradient with adaptive restart, run until the
    /// iterate stops moving.
    pub fn minimize(&self, lambda: &[f64]) -> DMatrix<f64> {
        let step = 1.0 / self.hessian.symmetric_eigenvalues().max();
        let (rows, cols) = self.linear.shape();
        let mut w = DMatrix::zeros(rows, cols);
        let mut z = w.clone();
        let mut t = 1.0f64;
        for _ in 0..2_000_000 {
            let next = self.prox(&(&z - self.gradient(&z) * step), lambda, step);
            let moved = (&next - &w).norm();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if (&next - &w).dot(&(&z - &next)) > 0.0 {
                z = next.clone();
                t = 1.0;
            } else {
                z = &next + (&next - &w) * ((t - 1.0) / t_next);
                t = t_next;
            }
            w = next;
            if moved < 1e-15 {
                break;
            }
        }
        w
    }

    fn prox(&self, v: &DMatrix<f64>, lambda: &[f64], step: f64) -> DMatrix<f64> {
        let mut out = v.clone();
        let mut row = 0;
        for (d, &p) in self.dims.iter().enumerate() {
            for j in row..row + p {
                let norm = v.row(j).norm();
                let keep = if norm > 0.0 { (1.0 - step * lambda[d] / norm).max(0.0) } else { 0.0 };
                out.row_mut(j).scale_mut(keep);
            }
            row += p;
        }
        out
    }
}

pub fn blocks(w: &DMatrix<f64>, dims: &[usize]) -> CoefficientBlocks<f64> {
    CoefficientBlocks::from_stacked(w, dims).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
