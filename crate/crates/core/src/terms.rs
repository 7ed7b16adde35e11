//! Model specifications: which effect terms enter each distribution
//! parameter's additive predictor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Covariate, FunctionalDataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: impl Into<String>, msg: impl Into<String>) -> SpecError {
    SpecError::Invalid { key: key.into(), msg: msg.into() }
}

/// Effect types of the additive predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// β₀(t)
    FunctionalIntercept,
    /// Piecewise-constant shifts in t at fixed change points.
    StepIntercept,
    /// z β(t)
    LinearScalar,
    /// f(z, t)
    SmoothScalar,
    /// β_g(t)
    GroupIntercept,
    /// z β_g(t)
    GroupLinear,
    /// z₁ z₂ β(t)
    LinearInteraction,
    /// f(z₁, z₂, t)
    SmoothInteraction,
    /// ∫ x(s) β(s, t) ds over the whole covariate domain
    FunctionalLinear,
    /// ∫₀ᵗ x(s) β(s, t) ds
    Historical,
    /// x(t) β(t)
    Concurrent,
}

impl TermKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TermKind::FunctionalIntercept => "functional_intercept",
            TermKind::StepIntercept => "step_intercept",
            TermKind::LinearScalar => "linear_scalar",
            TermKind::SmoothScalar => "smooth_scalar",
            TermKind::GroupIntercept => "group_intercept",
            TermKind::GroupLinear => "group_linear",
            TermKind::LinearInteraction => "linear_interaction",
            TermKind::SmoothInteraction => "smooth_interaction",
            TermKind::FunctionalLinear => "functional_linear",
            TermKind::Historical => "historical",
            TermKind::Concurrent => "concurrent",
        }
    }

    /// Number of covariates the term consumes.
    pub fn arity(&self) -> usize {
        match self {
            TermKind::FunctionalIntercept | TermKind::StepIntercept => 0,
            TermKind::GroupLinear | TermKind::LinearInteraction | TermKind::SmoothInteraction => 2,
            _ => 1,
        }
    }
}

/// P-spline settings for one basis direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSettings {
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_n_basis")]
    pub n_basis: usize,
    #[serde(default = "default_diff_order")]
    pub diff_order: usize,
}

fn default_degree() -> usize {
    3
}
fn default_n_basis() -> usize {
    8
}
fn default_diff_order() -> usize {
    2
}

impl Default for BasisSettings {
    fn default() -> Self {
        Self { degree: 3, n_basis: 8, diff_order: 2 }
    }
}

impl BasisSettings {
    pub fn new(degree: usize, n_basis: usize, diff_order: usize) -> Self {
        Self { degree, n_basis, diff_order }
    }

    fn validate(&self, key: &str) -> Result<(), SpecError> {
        if self.n_basis < self.degree + 1 {
            return Err(invalid(
                key,
                format!("n_basis {} must be at least degree + 1 = {}", self.n_basis, self.degree + 1),
            ));
        }
        if self.diff_order > self.degree && self.diff_order > 0 {
            return Err(invalid(key, format!("difference order {} exceeds degree {}", self.diff_order, self.degree)));
        }
        if self.diff_order >= self.n_basis {
            return Err(invalid(key, "difference order must be below n_basis"));
        }
        Ok(())
    }
}

/// One effect term of a parameter's predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDescriptor {
    pub kind: TermKind,
    /// Display name; defaults to `kind(cov1,cov2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Target degrees of freedom of the base-learner.
    #[serde(default = "default_df")]
    pub df: f64,
    #[serde(default)]
    pub time_basis: BasisSettings,
    #[serde(default)]
    pub covariate_basis: BasisSettings,
    /// Change points of a step intercept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changepoints: Vec<f64>,
    /// Center the covariate part against the intercept (or the parent group).
    /// Defaults to true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<bool>,
    /// Parent grouping variable for a nested group intercept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within: Option<String>,
    /// Standardize a functional covariate pointwise before use.
    #[serde(default)]
    pub standardize: bool,
}

fn default_df() -> f64 {
    4.0
}

impl TermDescriptor {
    pub fn new(kind: TermKind, covariates: &[&str]) -> Self {
        Self {
            kind,
            name: None,
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            df: default_df(),
            time_basis: BasisSettings::default(),
            covariate_basis: BasisSettings::default(),
            changepoints: Vec::new(),
            center: None,
            within: None,
            standardize: false,
        }
    }

    pub fn functional_intercept() -> Self {
        Self::new(TermKind::FunctionalIntercept, &[])
    }

    pub fn with_df(mut self, df: f64) -> Self {
        self.df = df;
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn with_time_basis(mut self, b: BasisSettings) -> Self {
        self.time_basis = b;
        self
    }

    pub fn with_covariate_basis(mut self, b: BasisSettings) -> Self {
        self.covariate_basis = b;
        self
    }

    pub fn with_changepoints(mut self, c: Vec<f64>) -> Self {
        self.changepoints = c;
        self
    }

    pub fn with_within(mut self, parent: &str) -> Self {
        self.within = Some(parent.to_string());
        self
    }

    pub fn with_center(mut self, center: bool) -> Self {
        self.center = Some(center);
        self
    }

    pub fn standardized(mut self) -> Self {
        self.standardize = true;
        self
    }

    pub fn centered(&self) -> bool {
        self.center.unwrap_or(true)
    }

    pub fn display_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None if self.covariates.is_empty() => self.kind.as_str().to_string(),
            None => format!("{}({})", self.kind.as_str(), self.covariates.join(",")),
        }
    }

    /// Checks the term against a dataset; `key` locates the term in error
    /// messages.
    pub fn validate(&self, data: &FunctionalDataset, key: &str) -> Result<(), SpecError> {
        if self.covariates.len() != self.kind.arity() {
            return Err(invalid(
                format!("{key}.covariates"),
                format!(
                    "{} takes {} covariate(s), got {}",
                    self.kind.as_str(),
                    self.kind.arity(),
                    self.covariates.len()
                ),
            ));
        }
        if !(self.df.is_finite() && self.df > 0.0) {
            return Err(invalid(format!("{key}.df"), "df must be positive"));
        }
        self.time_basis.validate(&format!("{key}.time_basis"))?;
        self.covariate_basis.validate(&format!("{key}.covariate_basis"))?;
        let expect = |i: usize, want: &[&str]| -> Result<&Covariate, SpecError> {
            let name = &self.covariates[i];
            let cov = data
                .covariate(name)
                .ok_or_else(|| invalid(format!("{key}.covariates"), format!("unknown covariate '{name}'")))?;
            if !want.contains(&cov.type_name()) {
                return Err(invalid(
                    format!("{key}.covariates"),
                    format!(
                        "covariate '{name}' is {} but {} needs {}",
                        cov.type_name(),
                        self.kind.as_str(),
                        want.join(" or ")
                    ),
                ));
            }
            Ok(cov)
        };
        match self.kind {
            TermKind::FunctionalIntercept => {}
            TermKind::StepIntercept => {
                if self.changepoints.is_empty() {
                    return Err(invalid(format!("{key}.changepoints"), "at least one change point needed"));
                }
                if self.changepoints.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid(format!("{key}.changepoints"), "change points must increase"));
                }
            }
            TermKind::LinearScalar | TermKind::SmoothScalar => {
                expect(0, &["scalar"])?;
            }
            TermKind::GroupIntercept => {
                expect(0, &["categorical"])?;
                if let Some(parent) = &self.within {
                    match data.covariate(parent) {
                        Some(Covariate::Categorical { .. }) => {}
                        _ => {
                            return Err(invalid(
                                format!("{key}.within"),
                                format!("'{parent}' is not a categorical covariate"),
                            ))
                        }
                    }
                }
            }
            TermKind::GroupLinear => {
                expect(0, &["categorical"])?;
                expect(1, &["scalar"])?;
            }
            TermKind::LinearInteraction | TermKind::SmoothInteraction => {
                expect(0, &["scalar"])?;
                expect(1, &["scalar"])?;
            }
            TermKind::FunctionalLinear => {
                expect(0, &["functional"])?;
            }
            TermKind::Historical | TermKind::Concurrent => {
                if let Covariate::Functional(f) = expect(0, &["functional"])? {
                    if !f.grid.matches(&data.grid) {
                        return Err(invalid(
                            format!("{key}.covariates"),
                            format!("covariate '{}' must be observed on the response grid", self.covariates[0]),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Terms of one distribution parameter. A parameter without terms stays at
/// its offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub terms: Vec<TermDescriptor>,
}

/// Family plus the additive predictor of every distribution parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: String,
    pub parameters: Vec<ParameterSpec>,
}

impl ModelSpec {
    pub fn new(family: &str, terms: Vec<Vec<TermDescriptor>>) -> Self {
        Self {
            family: family.to_string(),
            parameters: terms.into_iter().map(|terms| ParameterSpec { name: None, terms }).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.parameters.len()
    }

    pub fn terms(&self, q: usize) -> &[TermDescriptor] {
        &self.parameters[q].terms
    }

    /// Checks parameter count, parameter names, term validity and name
    /// uniqueness.
    pub fn validate(&self, param_names: &[&str], data: &FunctionalDataset) -> Result<(), SpecError> {
        if self.parameters.len() != param_names.len() {
            return Err(invalid(
                "model.parameters",
                format!(
                    "family '{}' has {} parameters ({}), spec lists {}",
                    self.family,
                    param_names.len(),
                    param_names.join(", "),
                    self.parameters.len()
                ),
            ));
        }
        for (q, p) in self.parameters.iter().enumerate() {
            let key = format!("model.parameters[{q}]");
            if let Some(name) = &p.name {
                if name != param_names[q] {
                    return Err(invalid(
                        format!("{key}.name"),
                        format!("expected parameter '{}', got '{name}'", param_names[q]),
                    ));
                }
            }
            let mut seen = std::collections::HashSet::new();
            for (j, t) in p.terms.iter().enumerate() {
                let tkey = format!("{key}.terms[{j}]");
                t.validate(data, &tkey)?;
                if !seen.insert(t.display_name()) {
                    return Err(invalid(format!("{tkey}.name"), format!("duplicate term name '{}'", t.display_name())));
                }
            }
        }
        Ok(())
    }
}
