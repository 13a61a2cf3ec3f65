//! Debiased inference for linear contrasts of regression coefficients in
//! high-dimensional two-sample linear models.

pub mod data;
pub mod error;
pub mod inference;
pub mod lasso;
pub mod normal;
pub mod projection;
pub mod sim;
pub mod sparse;

pub use data::{design_stats, load_csv, read_loading, CsvSchema, DesignStats, GroupSample, TwoGroupDataset};
pub use error::{HitsError, Result, SolverSlacks};
pub use inference::{
    ate_inference, ite, ite_inference, predict_inference, ContrastInference, ContrastKind, InferenceConfig,
};
pub use lasso::{lasso_fit, LassoConfig, LassoFit};
pub use projection::{direction_baseline, direction_enhanced, direction_relaxed, ProjectionConfig, ProjectionDirection};
pub use sparse::{sparsity_assisted_test, SparsityConfig, SparsityAssistedResult};

pub use nalgebra;
