//! Data-driven digital models of physical systems: a fitted MLP for the
//! mean response and an input-dependent Gaussian noise model.

mod fit;
mod mlp;
mod noise;

pub use fit::{
    fit_mean_model, fit_mean_model_unchecked, mlp_vjp, mse, sample_system, DigitalModel, FitConfig, FitReport,
};
pub use mlp::{Activation, Mlp, MlpGrads, MlpTrace};
pub use noise::{
    build_mixing_matrix, estimate_covariance, fit_noise_model, frobenius, frobenius_relative, mixing_from_cov,
    CovarianceEstimate, NoiseFitConfig, NoiseFitReport, NoiseModel,
};
