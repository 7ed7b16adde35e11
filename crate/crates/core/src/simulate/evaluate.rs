//! Comparison of a fitted model with a scenario's ground truth.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{effect_relrmse, effect_rmse, mean_kld};
use super::scenario::ScenarioTruth;
use super::SimulateError;
use crate::basis::EffectSurface;
use crate::boost::FittedModel;
use crate::terms::TermKind;

/// Estimation error of one effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectMetric {
    pub param: String,
    pub term: String,
    /// Whether the model selected the effect at all.
    pub selected: bool,
    pub rmse: f64,
    /// `None` when the true effect is constant.
    pub relrmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_kld: f64,
    pub effects: Vec<EffectMetric>,
}

impl Evaluation {
    /// Long-format CSV with columns `metric,param,term,value,status`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "param", "term", "value", "status"])?;
        w.write_record(["mean_kld", "", "", &crate::data::fmt_num(self.mean_kld), "ok"])?;
        for e in &self.effects {
            let status = if e.selected { "selected" } else { "not_selected" };
            w.write_record(["rmse", &e.param, &e.term, &crate::data::fmt_num(e.rmse), status])?;
            match e.relrmse {
                Some(v) => w.write_record(["relrmse", &e.param, &e.term, &crate::data::fmt_num(v), status])?,
                None => w.write_record(["relrmse", &e.param, &e.term, "", "constant_truth"])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean KLD over the simulated covariates and per-effect (relative) RMSE
/// of `model` after `m` iterations. Effects are matched by parameter and
/// display name; an effect present on one side only is compared with zero.
/// Functional intercept surfaces include the parameter's offset.
pub fn evaluate(model: &FittedModel, truth: &ScenarioTruth, m: Option<usize>) -> Result<Evaluation, SimulateError> {
    if model.spec.family != truth.family {
        return Err(SimulateError::Eval(format!(
            "model family '{}' differs from the truth's '{}'",
            model.spec.family, truth.family
        )));
    }
    let family = truth.family()?;
    let data = truth.covariate_data()?;
    let est = model.predict(&data, m)?;
    let kld = mean_kld(family, &truth.params()?, &est.params)?;

    let t = truth.grid.points();
    let names = family.param_names();
    let mut effects = Vec::new();
    let mut matched = vec![false; truth.effects.len()];
    for (q, recipes) in model.recipes.iter().enumerate() {
        let selected = model.selected(q, m)?;
        for (j, recipe) in recipes.iter().enumerate() {
            let mut est_surface = model.effect_surface(q, j, t, m)?;
            if recipe.term.kind == TermKind::FunctionalIntercept {
                est_surface.values.iter_mut().for_each(|v| *v += model.offsets[q]);
            }
            let name = recipe.name();
            let k = truth.effects.iter().position(|e| e.q == q && e.name() == name);
            let true_surface = match k {
                Some(k) => {
                    matched[k] = true;
                    truth.effect_surface(k)?
                }
                None => est_surface.zeros_like(),
            };
            effects.push(metric(names[q], &name, selected.contains(&j), &true_surface, &est_surface)?);
        }
    }
    for (k, e) in truth.effects.iter().enumerate().filter(|(k, _)| !matched[*k]) {
        let s = truth.effect_surface(k)?;
        effects.push(metric(names[e.q], &e.name(), false, &s, &s.zeros_like())?);
    }
    Ok(Evaluation { mean_kld: kld, effects })
}

fn metric(
    param: &str,
    term: &str,
    selected: bool,
    truth: &EffectSurface,
    est: &EffectSurface,
) -> Result<EffectMetric, SimulateError> {
    let rmse = effect_rmse(truth, est)?;
    let relrmse = match effect_relrmse(truth, est) {
        Ok(v) => Some(v),
        Err(SimulateError::RangeZero(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EffectMetric { param: param.to_string(), term: term.to_string(), selected, rmse, relrmse })
}
