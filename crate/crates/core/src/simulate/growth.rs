//! Parametric growth curves used as smooth test fixtures.

use serde::{Deserialize, Serialize};

use super::SimulateError;

/// A parametric growth model with its parameters. Levels `y0`, `y_max` are
/// on the log10 scale for the Baranyi–Roberts and Gompertz models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GrowthCurve {
    BaranyiRoberts {
        y0: f64,
        y_max: f64,
        mu_max: f64,
        lag: f64,
    },
    Gompertz {
        y0: f64,
        y_max: f64,
        mu_max: f64,
        lag: f64,
    },
    /// `a + (y0 − a) / (1 + (t/c)^b)^d`
    WeberSigmoid {
        a: f64,
        y0: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    Logistic {
        y0: f64,
        y_max: f64,
        rate: f64,
    },
}

impl GrowthCurve {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthCurve::BaranyiRoberts { .. } => "baranyi_roberts",
            GrowthCurve::Gompertz { .. } => "gompertz",
            GrowthCurve::WeberSigmoid { .. } => "weber_sigmoid",
            GrowthCurve::Logistic { .. } => "logistic",
        }
    }

    fn validate(&self) -> Result<(), SimulateError> {
        let bad = |msg: String| Err(SimulateError::Domain(format!("{}: {msg}", self.name())));
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            GrowthCurve::BaranyiRoberts { y0, y_max, mu_max, lag }
            | GrowthCurve::Gompertz { y0, y_max, mu_max, lag } => {
                if !all_finite(&[y0, y_max, mu_max, lag]) {
                    return bad("parameters must be finite".into());
                }
                if !(mu_max > 0.0) {
                    return bad(format!("maximal rate {mu_max} must be positive"));
                }
                if lag < 0.0 {
                    return bad(format!("lag {lag} must be nonnegative"));
                }
                if !(y_max > y0) {
                    return bad(format!("upper level {y_max} must exceed initial level {y0}"));
                }
            }
            GrowthCurve::WeberSigmoid { a, y0, b, c, d } => {
                if !all_finite(&[a, y0, b, c, d]) {
                    return bad("parameters must be finite".into());
                }
                if !(b > 0.0 && c > 0.0 && d > 0.0) {
                    return bad(format!("b = {b}, c = {c}, d = {d} must be positive"));
                }
            }
            GrowthCurve::Logistic { y0, y_max, rate } => {
                if !all_finite(&[y0, y_max, rate]) {
                    return bad("parameters must be finite".into());
                }
                if !(y0 > 0.0 && y_max > 0.0) {
                    return bad(format!("levels {y0}, {y_max} must be positive"));
                }
            }
        }
        Ok(())
    }

    fn at(&self, t: f64) -> f64 {
        const LN10: f64 = std::f64::consts::LN_10;
        match *self {
            GrowthCurve::BaranyiRoberts { y0, y_max, mu_max, lag } => {
                // Written with exp(−μ t) factors so that large t stays finite.
                let a = (mu_max * (lag - t)).exp();
                let num = 1.0 - (-mu_max * t).exp() + a;
                let den = 1.0 - (-mu_max * t).exp() + a * 10f64.powf(y_max - y0);
                y_max + (num / den).log10()
            }
            GrowthCurve::Gompertz { y0, y_max, mu_max, lag } => {
                let span = y_max - y0;
                let inner = mu_max * std::f64::consts::E * (lag - t) / (span * LN10) + 1.0;
                y0 + span * (-inner.exp()).exp()
            }
            GrowthCurve::WeberSigmoid { a, y0, b, c, d } => a + (y0 - a) / (1.0 + (t / c).powf(b)).powf(d),
            GrowthCurve::Logistic { y0, y_max, rate } => {
                // y∞ y0 e^{rt} / (y∞ + y0 (e^{rt} − 1)), divided through by e^{rt}.
                let e = (-rate * t).exp();
                y_max * y0 / (y_max * e + y0 * (1.0 - e))
            }
        }
    }
}

/// Evaluates a growth curve at the nonnegative time points `t`.
pub fn parametric_growth_curve(curve: &GrowthCurve, t: &[f64]) -> Result<Vec<f64>, SimulateError> {
    curve.validate()?;
    if let Some(v) = t.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(SimulateError::Domain(format!("time point {v} must be finite and nonnegative")));
    }
    Ok(t.iter().map(|&v| curve.at(v)).collect())
}
