//! The B-DARMA model: specification, likelihood, prior, and posterior.

pub mod data;
pub mod likelihood;
pub mod posterior;
pub mod prior;
pub mod recursion;
pub mod spec;

pub use data::ModelData;
pub use likelihood::{
    linear_predictor, log_likelihood, pointwise_log_likelihood, scale_value, LikelihoodEval, PredictorState,
    LOG_SCALE_BOUND,
};
pub use posterior::{log_posterior_and_grad, LogDensity, Posterior};
pub use prior::{log_prior, CoordPrior};
pub use spec::{
    Block, GammaPrior, MaskKind, MatrixPrior, ModelSpec, ParamLayout, ParamVector, Parameterization, PriorConfig,
    RegressionPrior,
};
