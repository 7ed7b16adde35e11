//! Component-wise gradient boosting for distributional regression.

mod engine;
mod learner;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{loss_sum, replay_coefficients, BoostState, Candidate, Engine, Step};
pub use learner::{Learner, LearnerFit};
pub use model::{build_blocks, offset_init, rebuild_blocks, FittedModel, ParamSurfaces, ARTIFACT_VERSION};
pub(crate) use model::{learners_for, loss_weights};

use crate::basis::BasisError;
use crate::data::DataError;
use crate::families::FamilyError;
use crate::terms::SpecError;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("singular system: {0}")]
    Singular(String),
    #[error("iteration {iteration}: {msg}")]
    Domain { iteration: usize, msg: String },
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("prediction error: {0}")]
    Prediction(String),
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Update strategy across distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One update per iteration, for the parameter whose best step lowers
    /// the loss most.
    #[default]
    Noncyclic,
    /// Every parameter is updated once per iteration, in order.
    Cyclic,
}

/// Starting values of the additive predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetInit {
    /// Link-transformed marginal moments of the response.
    #[default]
    Moments,
    Zero,
}

fn default_nu() -> Vec<f64> {
    vec![0.1]
}

fn default_mstop() -> usize {
    100
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    /// Step length per parameter; a single value applies to all.
    #[serde(default = "default_nu")]
    pub step_lengths: Vec<f64>,
    #[serde(default = "default_mstop")]
    pub m_stop_max: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub offsets: OffsetInit,
    /// Weight the loss by trapezoidal grid spacing instead of a plain sum.
    #[serde(default)]
    pub grid_weighted_loss: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self::new(0.1, default_mstop())
    }
}

impl Hyper {
    pub fn new(nu: f64, m_stop_max: usize) -> Self {
        Self {
            step_lengths: vec![nu],
            m_stop_max,
            method: Method::Noncyclic,
            seed: 0,
            offsets: OffsetInit::Moments,
            grid_weighted_loss: false,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn step(&self, q: usize) -> f64 {
        if self.step_lengths.len() == 1 {
            self.step_lengths[0]
        } else {
            self.step_lengths[q]
        }
    }

    pub fn validate(&self, n_params: usize) -> Result<(), BoostError> {
        if self.step_lengths.len() != 1 && self.step_lengths.len() != n_params {
            return Err(BoostError::Hyper(format!(
                "{} step lengths given for {n_params} parameters",
                self.step_lengths.len()
            )));
        }
        if let Some(nu) = self.step_lengths.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(BoostError::Hyper(format!("step length {nu} outside (0, 1]")));
        }
        Ok(())
    }
}
