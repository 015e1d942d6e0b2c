//! Multi-view data from the factor model
//! `x_d = Δ_d ũ_y + A_d u + Σ̃_d^{1/2} e_d`, with ground truth for evaluation.

mod metrics;

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;

pub use self::metrics::{cor_sigma, estimation_correlation, precision_recall, sum_correlation};

const MAX_RETRIES: usize = 100;

/// Within-view noise covariance `Σ̃_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovKind {
    /// `Σ̃_ij = φ^{|i−j|}`.
    Autoregressive { phi: f64 },
    Identity,
}

impl CovKind {
    pub fn matrix<T: Scalar>(&self, p: usize) -> DMatrix<T> {
        match *self {
            CovKind::Identity => DMatrix::identity(p, p),
            CovKind::Autoregressive { phi } => {
                DMatrix::from_fn(p, p, |i, j| T::lit(phi.powi(i.abs_diff(j) as i32)))
            }
        }
    }
}

/// Class strengths `c_d`: one value for all views, one per view, or one
/// vector of length `K−1` per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassStrength {
    Common(f64),
    PerView(Vec<f64>),
    PerColumn(Vec<Vec<f64>>),
}

impl ClassStrength {
    /// Strength for a given class canonical correlation `ρ`: `√(ρ/(1−ρ))`.
    pub fn from_correlation(rho: f64) -> Self {
        ClassStrength::Common(strength_for_correlation(rho))
    }

    fn resolve(&self, n_views: usize, k1: usize) -> Result<Vec<Vec<f64>>> {
        let out = match self {
            ClassStrength::Common(c) => vec![vec![*c; k1]; n_views],
            ClassStrength::PerView(cs) if cs.len() == n_views => cs.iter().map(|&c| vec![c; k1]).collect(),
            ClassStrength::PerColumn(cs) if cs.len() == n_views && cs.iter().all(|c| c.len() == k1) => cs.clone(),
            _ => {
                return Err(JacaError::InvalidParameter(format!(
                    "class_strength must be a number, {n_views} numbers, or {n_views} lists of {k1}"
                )))
            }
        };
        if out.iter().flatten().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(JacaError::InvalidParameter("class strengths must be positive".into()));
        }
        Ok(out)
    }
}

/// `√(ρ/(1−ρ))`, the loading scale giving canonical correlation `ρ` between
/// two views of equal strength.
pub fn strength_for_correlation(rho: f64) -> f64 {
    (rho / (1.0 - rho)).sqrt()
}

fn default_s() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_labeled: usize,
    #[serde(default)]
    pub n_unlabeled: usize,
    #[serde(default)]
    pub n_test: usize,
    pub p: Vec<usize>,
    pub n_classes: usize,
    pub priors: Vec<f64>,
    #[serde(default = "default_s")]
    pub s: usize,
    pub class_strength: ClassStrength,
    /// Canonical correlations of the class-independent factors; `q` is the length.
    #[serde(default)]
    pub extra_corrs: Vec<f64>,
    pub cov_kind: Vec<CovKind>,
    pub seed: u64,
}

impl SimulationConfig {
    /// Two views, two classes with `π₁ = 0.4`, AR(0.8) and AR(0.5) noise, class
    /// correlation 0.8, 160 labeled and 100 unlabeled subjects, 10 000 test
    /// points. `case` 1 has no extra factors, 2 adds correlations (0.6, 0.5),
    /// 3 adds (0.9, 0.5).
    pub fn two_view_case(case: u8, p: (usize, usize), seed: u64) -> Result<Self> {
        let extra_corrs = match case {
            1 => vec![],
            2 => vec![0.6, 0.5],
            3 => vec![0.9, 0.5],
            _ => return Err(JacaError::InvalidParameter(format!("unknown case {case}"))),
        };
        Ok(Self {
            n_labeled: 160,
            n_unlabeled: 100,
            n_test: 10_000,
            p: vec![p.0, p.1],
            n_classes: 2,
            priors: vec![0.4, 0.6],
            s: 10,
            class_strength: ClassStrength::from_correlation(0.8),
            extra_corrs,
            cov_kind: vec![
                CovKind::Autoregressive { phi: 0.8 },
                CovKind::Autoregressive { phi: 0.5 },
            ],
            seed,
        })
    }

    pub fn n_views(&self) -> usize {
        self.p.len()
    }

    pub fn q(&self) -> usize {
        self.extra_corrs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JacaError::InvalidParameter(m));
        let d = self.n_views();
        let k1 = self.n_classes.saturating_sub(1);
        if d < 2 {
            return bad(format!("need at least 2 views, got {d}"));
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_labeled + self.n_unlabeled < 2 {
            return bad("need at least 2 training subjects".into());
        }
        if self.priors.len() != self.n_classes {
            return bad(format!("{} priors for {} classes", self.priors.len(), self.n_classes));
        }
        if self.priors.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return bad("priors must lie in (0, 1)".into());
        }
        if (self.priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("priors must sum to 1".into());
        }
        if self.cov_kind.len() != d {
            return bad(format!("{} cov_kind entries for {d} views", self.cov_kind.len()));
        }
        for c in &self.cov_kind {
            if let CovKind::Autoregressive { phi } = c {
                if !(phi.abs() < 1.0) {
                    return bad(format!("autoregressive phi must lie in (-1, 1), got {phi}"));
                }
            }
        }
        if self.s < k1 {
            return bad(format!("s = {} cannot support {k1} discriminant directions", self.s));
        }
        if let Some(&p) = self.p.iter().find(|&&p| p < self.s) {
            return bad(format!("s = {} exceeds a view dimension {p}", self.s));
        }
        if let Some(&p) = self.p.iter().find(|&&p| p < k1 + self.q()) {
            return bad(format!("view dimension {p} too small for {} factors", k1 + self.q()));
        }
        if self.extra_corrs.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return bad("extra_corrs must lie in (0, 1)".into());
        }
        self.class_strength.resolve(d, k1)?;
        Ok(())
    }
}

/// `K × (K−1)` matrix whose row `k` is `ũ(k)`. Column `l` holds
/// `√(π_{l+1}/(S_l S_{l+1}))` in its first `l` entries and
/// `−√(S_l/(π_{l+1} S_{l+1}))` at entry `l+1`, with `S_l = π_1 + … + π_l`.
pub fn indicator_matrix<T: Scalar>(priors: &[f64]) -> DMatrix<T> {
    let k = priors.len();
    let mut theta = DMatrix::zeros(k, k.saturating_sub(1));
    let mut cum = 0.0;
    for l in 0..k.saturating_sub(1) {
        cum += priors[l];
        let next = priors[l + 1];
        let cum_next = cum + next;
        let top = (next / (cum * cum_next)).sqrt();
        for r in 0..=l {
            theta[(r, l)] = T::lit(top);
        }
        theta[(l + 1, l)] = T::lit(-(cum / (next * cum_next)).sqrt());
    }
    theta
}

/// `ũ_y` for the 0-based class `y`; mean zero and identity covariance under `π`.
pub fn transformed_indicator<T: Scalar>(y: usize, priors: &[f64]) -> Result<Vec<T>> {
    if y >= priors.len() {
        return Err(JacaError::InvalidParameter(format!(
            "class {} outside 1..={}",
            y + 1,
            priors.len()
        )));
    }
    Ok(indicator_matrix::<T>(priors).row(y).iter().copied().collect())
}

/// Right-multiplies `m` so that `mᵀ Σ̃ m = diag(c²)`; `None` if `mᵀΣ̃m` is
/// numerically rank deficient.
fn rotate_and_scale<T: Scalar>(m: &DMatrix<T>, sigma: &DMatrix<T>, c: &[T]) -> Option<DMatrix<T>> {
    let gram = m.tr_mul(&(sigma * m));
    let gram = (&gram + gram.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b));
    if !(top > T::zero()) || eig.eigenvalues.iter().any(|&l| l <= top * T::lit(1e-10)) {
        return None;
    }
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(
        c.len(),
        eig.eigenvalues.iter().zip(c).map(|(&l, &ck)| ck / l.sqrt()),
    ));
    Some(m * eig.eigenvectors * scale)
}

fn normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Row-sparse `B_d` with `s` uniformly placed nonzero rows, rotated and scaled
/// so `B_dᵀΣ̃_dB_d = diag(c²)`, and `Δ_d = Σ̃_dB_d`. Returns the sorted support too.
pub fn generate_class_loadings<T: Scalar, R: Rng + ?Sized>(
    sigma: &DMatrix<T>,
    s: usize,
    c: &[T],
    rng: &mut R,
) -> Result<(DMatrix<T>, DMatrix<T>, Vec<usize>)> {
    let p = sigma.nrows();
    let k1 = c.len();
    if s > p || s < k1 || c.iter().any(|&v| !(v > T::zero())) {
        return Err(JacaError::InvalidParameter(format!(
            "cannot place {k1} directions on {s} of {p} rows with strengths {c:?}"
        )));
    }
    for _ in 0..MAX_RETRIES {
        let mut support = rand::seq::index::sample(rng, p, s).into_vec();
        support.sort_unstable();
        let mut b = DMatrix::zeros(p, k1);
        for &j in &support {
            for k in 0..k1 {
                let mag: f64 = rng.random_range(1.0..=2.0);
                b[(j, k)] = T::lit(if rng.random_bool(0.5) { mag } else { -mag });
            }
        }
        if let Some(b) = rotate_and_scale(&b, sigma, c) {
            let delta = sigma * &b;
            return Ok((b, delta, support));
        }
    }
    Err(JacaError::InvalidDataset(
        "class loadings stayed rank deficient".into(),
    ))
}

/// `A_d = Σ̃_d M_d` with `M_d` Gaussian, projected off the columns of `Δ_d`,
/// then rotated and scaled so `M_dᵀΣ̃_dM_d = diag(c_k²)`, `c_k = √(ρ_k/(1−ρ_k))`.
pub fn generate_shared_loadings<T: Scalar, R: Rng + ?Sized>(
    sigma: &DMatrix<T>,
    delta: &DMatrix<T>,
    extra_corrs: &[f64],
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let p = sigma.nrows();
    let q = extra_corrs.len();
    if q == 0 {
        return Ok(DMatrix::zeros(p, 0));
    }
    let c: Vec<T> = extra_corrs.iter().map(|&r| T::lit(strength_for_correlation(r))).collect();
    let dtd = Cholesky::<T, Dyn>::new(delta.tr_mul(delta))
        .ok_or_else(|| JacaError::InvalidDataset("class loadings are rank deficient".into()))?;
    for _ in 0..MAX_RETRIES {
        let m = DMatrix::from_fn(p, q, |_, _| normal::<T, _>(rng));
        let m = &m - delta * dtd.solve(&delta.tr_mul(&m));
        if let Some(m) = rotate_and_scale(&m, sigma, &c) {
            return Ok(sigma * m);
        }
    }
    Err(JacaError::InvalidDataset(
        "shared loadings stayed rank deficient".into(),
    ))
}

fn symmetric_sqrt<T: Scalar>(sigma: &DMatrix<T>) -> DMatrix<T> {
    let eig = SymmetricEigen::new(sigma.clone());
    let root = eig.eigenvalues.map(|l| l.max(T::zero()).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Exact generating matrices of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth<T: Scalar> {
    pub config: SimulationConfig,
    pub sigma_tilde: Vec<DMatrix<T>>,
    /// `B_d ∝ Σ̃_d⁻¹Δ_d`, the population discriminant directions.
    pub class_loadings: Vec<DMatrix<T>>,
    pub delta: Vec<DMatrix<T>>,
    /// `p_d × q`; zero columns when there are no extra factors.
    pub shared_loadings: Vec<DMatrix<T>>,
    /// Sorted 0-based nonzero rows of each `B_d`.
    pub support: Vec<Vec<usize>>,
    pub class_strength: Vec<Vec<T>>,
    sigma_sqrt: Vec<DMatrix<T>>,
    indicators: DMatrix<T>,
}

impl<T: Scalar> SimulationTruth<T> {
    /// Draws every loading matrix from the configuration's seed.
    pub fn generate(cfg: &SimulationConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::generate_with(cfg, &mut rng)
    }

    fn generate_with<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k1 = cfg.n_classes - 1;
        let strengths = cfg.class_strength.resolve(cfg.n_views(), k1)?;
        let mut truth = Self {
            config: cfg.clone(),
            sigma_tilde: Vec::new(),
            class_loadings: Vec::new(),
            delta: Vec::new(),
            shared_loadings: Vec::new(),
            support: Vec::new(),
            class_strength: strengths
                .iter()
                .map(|c| c.iter().map(|&v| T::lit(v)).collect())
                .collect(),
            sigma_sqrt: Vec::new(),
            indicators: indicator_matrix(&cfg.priors),
        };
        for (d, &p) in cfg.p.iter().enumerate() {
            let sigma: DMatrix<T> = cfg.cov_kind[d].matrix(p);
            let (b, delta, support) =
                generate_class_loadings(&sigma, cfg.s, &truth.class_strength[d], rng)?;
            let a = generate_shared_loadings(&sigma, &delta, &cfg.extra_corrs, rng)?;
            truth.sigma_sqrt.push(symmetric_sqrt(&sigma));
            truth.sigma_tilde.push(sigma);
            truth.class_loadings.push(b);
            truth.delta.push(delta);
            truth.shared_loadings.push(a);
            truth.support.push(support);
        }
        Ok(truth)
    }

    pub fn n_views(&self) -> usize {
        self.sigma_tilde.len()
    }

    pub fn n_classes(&self) -> usize {
        self.indicators.nrows()
    }

    /// `ũ(k)` for every class as rows.
    pub fn indicators(&self) -> &DMatrix<T> {
        &self.indicators
    }

    /// `Σ_d = Σ̃_d + Δ_dΔ_dᵀ + A_dA_dᵀ`.
    pub fn marginal_cov(&self, d: usize) -> DMatrix<T> {
        &self.sigma_tilde[d]
            + &self.delta[d] * self.delta[d].transpose()
            + &self.shared_loadings[d] * self.shared_loadings[d].transpose()
    }

    /// `Σ_dl = Δ_dΔ_lᵀ + A_dA_lᵀ`.
    pub fn cross_cov(&self, d: usize, l: usize) -> DMatrix<T> {
        &self.delta[d] * self.delta[l].transpose()
            + &self.shared_loadings[d] * self.shared_loadings[l].transpose()
    }

    /// Population class canonical correlations between views `d` and `l`:
    /// `c_d c_l / √((1+c_d²)(1+c_l²))` per discriminant direction.
    pub fn class_correlations(&self, d: usize, l: usize) -> Vec<T> {
        self.class_strength[d]
            .iter()
            .zip(&self.class_strength[l])
            .map(|(&a, &b)| a * b / ((T::one() + a * a) * (T::one() + b * b)).sqrt())
            .collect()
    }

    /// Draws `n_labeled` labeled subjects followed by `n_unlabeled` subjects
    /// whose labels are withheld. Ids are `{prefix}{i}` (1-based). Returns the
    /// dataset and every drawn class (0-based), withheld ones included.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n_labeled: usize,
        n_unlabeled: usize,
        prefix: &str,
        rng: &mut R,
    ) -> Result<(MultiViewDataset<T>, Vec<usize>)> {
        let n = n_labeled + n_unlabeled;
        let classes = WeightedIndex::new(&self.config.priors)
            .map_err(|e| JacaError::InvalidParameter(format!("priors: {e}")))?;
        let q = self.config.q();
        let mut views: Vec<DMatrix<T>> = self
            .sigma_tilde
            .iter()
            .map(|s| DMatrix::zeros(n, s.nrows()))
            .collect();
        let mut y = Vec::with_capacity(n);
        let mut noise: Vec<DMatrix<T>> = views.iter().map(|v| DMatrix::zeros(v.ncols(), n)).collect();
        let mut factors = DMatrix::<T>::zeros(q, n);
        for i in 0..n {
            y.push(classes.sample(rng));
            for f in 0..q {
                factors[(f, i)] = normal(rng);
            }
            for e in noise.iter_mut() {
                for j in 0..e.nrows() {
                    e[(j, i)] = normal(rng);
                }
            }
        }
        let class_rows = self.indicators.select_rows(&y);
        for (d, x) in views.iter_mut().enumerate() {
            let mut signal = &class_rows * self.delta[d].transpose();
            if q > 0 {
                signal += factors.transpose() * self.shared_loadings[d].transpose();
            }
            *x = signal + (&self.sigma_sqrt[d] * &noise[d]).transpose();
        }
        let labels = y
            .iter()
            .enumerate()
            .map(|(i, &k)| (i < n_labeled).then_some(k))
            .collect();
        let ids = (1..=n).map(|i| format!("{prefix}{i}")).collect();
        let names = views
            .iter()
            .enumerate()
            .map(|(d, x)| (1..=x.ncols()).map(|j| format!("v{}_f{j}", d + 1)).collect())
            .collect();
        let present = vec![vec![true; self.n_views()]; n];
        let ds = MultiViewDataset::new(views, present, labels, self.n_classes(), ids, names)?;
        Ok((ds, y))
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &TruthDocument::from_truth(self))?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let doc: TruthDocument = serde_json::from_reader(reader)?;
        doc.into_truth()
    }
}

/// A generated training set (and optional test set) with its truth.
#[derive(Debug, Clone)]
pub struct Simulation<T: Scalar> {
    pub train: MultiViewDataset<T>,
    /// Classes of every training subject, withheld labels included.
    pub train_classes: Vec<usize>,
    /// `n_test` fully labeled subjects, `None` when `n_test = 0`.
    pub test: Option<MultiViewDataset<T>>,
    pub truth: SimulationTruth<T>,
}

/// Generates loadings and training data from one seeded stream, and the test
/// set from an independent stream of the same seed.
pub fn sample_dataset<T: Scalar>(cfg: &SimulationConfig) -> Result<Simulation<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = SimulationTruth::generate_with(cfg, &mut rng)?;
    let (train, train_classes) = truth.sample(cfg.n_labeled, cfg.n_unlabeled, "s", &mut rng)?;
    let test = if cfg.n_test > 0 {
        let mut test_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        test_rng.set_stream(1);
        Some(truth.sample(cfg.n_test, 0, "t", &mut test_rng)?.0)
    } else {
        None
    };
    Ok(Simulation {
        train,
        train_classes,
        test,
        truth,
    })
}

type Rows = Vec<Vec<f64>>;

fn to_rows<T: Scalar>(m: &DMatrix<T>) -> Rows {
    m.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

fn from_rows<T: Scalar>(rows: &Rows, ncols: usize, what: &str) -> Result<DMatrix<T>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(JacaError::Format {
            file: "truth".into(),
            reason: format!("{what}: ragged rows, expected {ncols} columns"),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| T::lit(rows[i][j])))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthView {
    sigma_tilde: Rows,
    class_loadings: Rows,
    delta: Rows,
    shared_loadings: Rows,
    /// 1-based feature indices.
    support: Vec<usize>,
    class_strength: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthDocument {
    format: String,
    config: SimulationConfig,
    class_correlations: Vec<Vec<f64>>,
    views: Vec<TruthView>,
}

const TRUTH_FORMAT: &str = "jaca-simulation-truth/1";

impl TruthDocument {
    fn from_truth<T: Scalar>(t: &SimulationTruth<T>) -> Self {
        let pairs = crate::dataset::view_pairs(t.n_views());
        Self {
            format: TRUTH_FORMAT.into(),
            config: t.config.clone(),
            class_correlations: pairs
                .iter()
                .map(|&(d, l)| t.class_correlations(d, l).iter().map(|v| v.as_f64()).collect())
                .collect(),
            views: (0..t.n_views())
                .map(|d| TruthView {
                    sigma_tilde: to_rows(&t.sigma_tilde[d]),
                    class_loadings: to_rows(&t.class_loadings[d]),
                    delta: to_rows(&t.delta[d]),
                    shared_loadings: to_rows(&t.shared_loadings[d]),
                    support: t.support[d].iter().map(|j| j + 1).collect(),
                    class_strength: t.class_strength[d].iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    fn into_truth<T: Scalar>(self) -> Result<SimulationTruth<T>> {
        let bad = |reason: String| JacaError::Format {
            file: "truth".into(),
            reason,
        };
        if self.format != TRUTH_FORMAT {
            return Err(bad(format!("unsupported format {:?}", self.format)));
        }
        self.config.validate()?;
        if self.views.len() != self.config.n_views() {
            return Err(bad("view count differs from config".into()));
        }
        let k1 = self.config.n_classes - 1;
        let q = self.config.q();
        let mut t = SimulationTruth {
            indicators: indicator_matrix(&self.config.priors),
            config: self.config,
            sigma_tilde: Vec::new(),
            class_loadings: Vec::new(),
            delta: Vec::new(),
            shared_loadings: Vec::new(),
            support: Vec::new(),
            class_strength: Vec::new(),
            sigma_sqrt: Vec::new(),
        };
        for (d, v) in self.views.into_iter().enumerate() {
            let p = t.config.p[d];
            let sigma = from_rows::<T>(&v.sigma_tilde, p, "sigma_tilde")?;
            let b = from_rows(&v.class_loadings, k1, "class_loadings")?;
            let delta = from_rows(&v.delta, k1, "delta")?;
            let a = if q == 0 {
                DMatrix::zeros(p, 0)
            } else {
                from_rows(&v.shared_loadings, q, "shared_loadings")?
            };
            if sigma.nrows() != p || b.nrows() != p || delta.nrows() != p || a.nrows() != p {
                return Err(bad(format!("view {} matrices must have {p} rows", d + 1)));
            }
            if v.support.iter().any(|&j| j == 0 || j > p) {
                return Err(bad(format!("view {} support out of range", d + 1)));
            }
            t.sigma_sqrt.push(symmetric_sqrt(&sigma));
            t.sigma_tilde.push(sigma);
            t.class_loadings.push(b);
            t.delta.push(delta);
            t.shared_loadings.push(a);
            t.support.push(v.support.iter().map(|j| j - 1).collect());
            t.class_strength.push(v.class_strength.iter().map(|&c| T::lit(c)).collect());
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_indicator() {
        let u: Vec<f64> = transformed_indicator(0, &[0.4, 0.6]).unwrap();
        assert!((u[0] - (0.6f64 / 0.4).sqrt()).abs() < 1e-15);
        let u: Vec<f64> = transformed_indicator(1, &[0.4, 0.6]).unwrap();
        assert!((u[0] + (0.4f64 / 0.6).sqrt()).abs() < 1e-15);
        let u: Vec<f64> = transformed_indicator(1, &[0.5, 0.5]).unwrap();
        assert!((u[0] + 1.0).abs() < 1e-15);
        assert!(transformed_indicator::<f64>(2, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn strength_from_correlation() {
        assert!((strength_for_correlation(0.8) - 2.0).abs() < 1e-15);
        assert!((strength_for_correlation(0.6) - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((strength_for_correlation(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SimulationConfig::two_view_case(3, (20, 30), 7).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SimulationConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let with_unknown = text.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<SimulationConfig>(&with_unknown).is_err());
    }

    #[test]
    fn class_strength_forms() {
        assert!(serde_json::from_str::<ClassStrength>("[1.0, [2.0]]").is_err());
        let c: ClassStrength = serde_json::from_str("[[1.0, 2.0], [3.0, 4.0]]").unwrap();
        assert_eq!(c.resolve(2, 2).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let c: ClassStrength = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(c.resolve(2, 3).unwrap(), vec![vec![1.0; 3], vec![2.0; 3]]);
        assert!(ClassStrength::Common(-1.0).resolve(2, 1).is_err());
    }

    #[test]
    fn invalid_configs() {
        let base = SimulationConfig::two_view_case(1, (20, 20), 0).unwrap();
        let mut c = base.clone();
        c.priors = vec![0.5, 0.6];
        assert!(c.validate().is_err());
        c = base.clone();
        c.s = 30;
        assert!(c.validate().is_err());
        c = base.clone();
        c.extra_corrs = vec![1.0];
        assert!(c.validate().is_err());
        c = base.clone();
        c.cov_kind.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn identity_noise_orthonormalizes() {
        let sigma = DMatrix::<f64>::identity(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (b, delta, support) = generate_class_loadings(&sigma, 5, &[2.0, 2.0], &mut rng).unwrap();
        assert_eq!(support.len(), 5);
        assert_eq!(b, delta);
        let g = b.tr_mul(&b);
        assert!((g - DMatrix::from_diagonal_element(2, 2, 4.0)).amax() < 1e-10);
    }

    #[test]
    fn truth_json_round_trip() {
        let cfg = SimulationConfig {
            n_test: 0,
            ..SimulationConfig::two_view_case(2, (15, 12), 3).unwrap()
        };
        let truth = SimulationTruth::<f64>::generate(&cfg).unwrap();
        let mut buf = Vec::new();
        truth.write_json(&mut buf).unwrap();
        let back = SimulationTruth::<f64>::read_json(buf.as_slice()).unwrap();
        assert_eq!(back.support, truth.support);
        assert_eq!(back.shared_loadings, truth.shared_loadings);
        assert_eq!(back.class_loadings, truth.class_loadings);
    }
}
