//! Simulation of functional data with known truth and evaluation of fits.

mod curves;
mod evaluate;
mod growth;
mod metrics;
mod random_spline;
mod scenario;

use thiserror::Error;

pub use curves::{draw_gaussian_curves, draw_general_curves, standardized_errors, DependencyLevel};
pub use evaluate::{evaluate, EffectMetric, Evaluation};
pub use growth::{parametric_growth_curve, GrowthCurve};
pub use metrics::{effect_relrmse, effect_rmse, mean_kld};
pub use random_spline::{build_omega, build_weight_matrix, draw_random_spline, RandomSplineDef};
pub use scenario::{
    draw_effect_coefficients, fit_spec, generate_scenario, tau2, za_gamma_template_spec, ScenarioConfig, ScenarioModel,
    ScenarioTruth, TrueEffect, APPLICATION_CHANGEPOINTS, TRUTH_VERSION,
};

use crate::basis::BasisError;
use crate::boost::BoostError;
use crate::data::DataError;
use crate::families::FamilyError;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("degenerate smoothness: {0}")]
    DegenerateSmoothness(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("relative RMSE undefined: true effect '{0}' is constant")]
    RangeZero(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("truth file: {0}")]
    Manifest(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
