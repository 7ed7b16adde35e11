//! Design and penalty matrices for all effect types.

pub mod df;
pub mod effects;
pub mod ortho;
pub mod quadrature;
pub mod spline;
pub mod tensor;

use thiserror::Error;

pub use df::{df_to_lambda, hat_trace};
pub use effects::{
    build_effect_design, BlockRecipe, CovariatePart, DesignBlock, EffectSurface, SurfaceRanges, TimePart,
};
pub use ortho::orthogonalize;
pub use spline::{difference_penalty, eval_bspline_basis, PenaltyDef, SplineBasisDef};
pub use tensor::{kronecker_design, row_tensor, Design};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("point out of range: {0}")]
    Range(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("empty basis: {0}")]
    EmptyBasis(String),
    #[error("infeasible df: {0}")]
    InfeasibleDf(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("prediction error: {0}")]
    Prediction(String),
    #[error(transparent)]
    Spec(#[from] crate::terms::SpecError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}
