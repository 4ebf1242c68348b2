//! Weight learning, calibration, conjugate posteriors and attention.

mod attention;
mod calibrate;
mod forest;
mod posterior;

pub use attention::{attention_forward, AttentionHead, AttentionOutput, AttentionSpec, AttentionWeights};
pub use calibrate::{
    calibrate_to_target, calibrate_weights, design_matrix, minimize_share_error, project_to_simplex, Calibration,
    CalibrationOptions,
};
pub use forest::{forest_importance, FeatureImportance, ForestConfig, MaxFeatures, RegressionForest};
pub use posterior::{bayes_posterior, bayes_posterior_precision, PosteriorGaussian};
