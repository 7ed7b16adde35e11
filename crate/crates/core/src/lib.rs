//! Boosted distributional regression for functional responses.
//!
//! Every parameter of a response distribution (mean, scale, shape, zero
//! probability) gets its own additive predictor built from tensor-product
//! P-spline base-learners, and the predictors are fitted jointly by
//! component-wise gradient boosting. A simulation engine generates smooth
//! functional data with known truth to evaluate the fits.

// Comparisons are written as `!(x > 0.0)` so that NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod boost;
pub mod data;
pub mod families;
pub mod resample;
pub mod simulate;
pub mod terms;
