//! Joint association and classification analysis (JACA) of multi-view data.
//!
//! Each view `X_d` gets a row-sparse coefficient block `W_d` chosen so that
//! `X_d W_d` both separates the classes (through the optimal-scoring response
//! `Ỹ`) and agrees with the other views' projections. Fitting reduces to one
//! penalized least-squares problem on a stacked design, solved by
//! block-coordinate descent. Subjects missing a label or whole views are
//! handled by the semi-supervised variant.
//!
//! ```no_run
//! use jaca::{cross_validate, train, CVConfig, Dataset, TrainConfig};
//!
//! # fn main() -> jaca::Result<()> {
//! let ds: Dataset = jaca::load_views(&["view1.csv", "view2.csv"], Some("labels.csv".as_ref()))?;
//! let cv = cross_validate(&ds, &CVConfig::default())?;
//! let model = train(&ds, &TrainConfig::from_cv(&cv, 0.5, 1e-8, 1000))?;
//! let predicted = model.predict(&ds, &[0, 1])?.labels;
//! # let _ = predicted;
//! # Ok(())
//! # }
//! ```
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `*32` variants for single precision.

pub mod augment;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod model;
pub mod scalar;
pub mod select;
pub mod simulate;
pub mod solver;

pub use augment::{build_augmented, build_augmented_ss, build_system, AugmentedSystem, BlockOrigin, RowBlock};
pub use classify::{fit_classifier, misclassification_rate, project, project_standardized, ProjectedClassifier};
pub use dataset::{
    build_score_matrix, load_views, load_views_with_classes, missing_patterns, standardize, view_pairs,
    write_labels, write_view, MissingPatternSets, MultiViewDataset, ScoreMatrix, StandardizationTransform,
};
pub use error::{JacaError, Result};
pub use model::{classifier_subsets, train, Convergence, Prediction, TrainConfig, TrainedModel};
pub use scalar::Scalar;
pub use select::{cross_validate, cv_criterion, rv_correlation, stratified_folds, CVConfig, CVResult, CVSummary};
pub use simulate::{
    estimation_correlation, precision_recall, sample_dataset, sum_correlation, transformed_indicator,
    Simulation, SimulationConfig, SimulationTruth,
};
pub use solver::{fit, kkt_residual, lambda_max, objective, soft_threshold, CoefficientBlocks, FitResult, SolverConfig};

pub type Dataset = MultiViewDataset<f64>;
pub type Dataset32 = MultiViewDataset<f32>;
pub type Coefficients = CoefficientBlocks<f64>;
pub type Coefficients32 = CoefficientBlocks<f32>;
pub type System = AugmentedSystem<f64>;
pub type System32 = AugmentedSystem<f32>;
pub type Model = TrainedModel<f64>;
pub type Model32 = TrainedModel<f32>;
pub type Truth = SimulationTruth<f64>;
pub type Truth32 = SimulationTruth<f32>;
