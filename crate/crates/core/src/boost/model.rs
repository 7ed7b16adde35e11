//! Fitting entry point, prediction and the serializable model artifact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::engine::{replay_coefficients, Engine, Step};
use super::learner::Learner;
use super::{BoostError, Hyper, OffsetInit};
use crate::basis::quadrature::trapezoid_weights;
use crate::basis::{build_effect_design, BlockRecipe, DesignBlock, EffectSurface, SurfaceRanges};
use crate::data::{FunctionalDataset, Grid};
use crate::families::{family_by_id, Family};
use crate::terms::ModelSpec;

/// Format version of the serialized model.
pub const ARTIFACT_VERSION: u32 = 1;

/// Predictors and implied parameters, one N×G matrix per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSurfaces {
    pub names: Vec<String>,
    pub predictors: Vec<DMatrix<f64>>,
    pub params: Vec<DMatrix<f64>>,
}

impl ParamSurfaces {
    pub fn from_predictors(family: &dyn Family, predictors: Vec<DMatrix<f64>>) -> Self {
        let params =
            predictors.iter().zip(family.links()).map(|(h, link)| h.map(|v| link.inverse_clamped(v))).collect();
        Self { names: family.param_names().iter().map(|s| s.to_string()).collect(), predictors, params }
    }

    pub fn param(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.names.iter().position(|n| n == name).map(|q| &self.params[q])
    }

    /// Long format: `curve,t,<param>...` with one row per curve and grid point.
    pub fn write_csv<W: Write>(&self, writer: W, grid: &Grid) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["curve".to_string(), "t".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let (n, g) = self.params[0].shape();
        for i in 0..n {
            for k in 0..g {
                let mut rec = vec![i.to_string(), crate::data::fmt_num(grid.points()[k])];
                rec.extend(self.params.iter().map(|p| crate::data::fmt_num(p[(i, k)])));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Starting values of the predictors.
pub fn offset_init(family: &dyn Family, data: &FunctionalDataset, init: OffsetInit) -> Result<Vec<f64>, BoostError> {
    match init {
        OffsetInit::Zero => Ok(vec![0.0; family.n_params()]),
        OffsetInit::Moments => {
            for v in data.response.iter() {
                family.check_support(*v)?;
            }
            Ok(family.moment_offsets(data.response.as_slice())?)
        }
    }
}

/// Validates `spec` against the family and data and builds every block.
pub fn build_blocks(spec: &ModelSpec, data: &FunctionalDataset) -> Result<Vec<Vec<DesignBlock>>, BoostError> {
    let family = family_by_id(&spec.family)?;
    spec.validate(family.param_names(), data)?;
    let mut out = Vec::with_capacity(spec.n_params());
    for p in &spec.parameters {
        let blocks = p.terms.iter().map(|t| build_effect_design(t, data)).collect::<Result<Vec<_>, _>>()?;
        out.push(blocks);
    }
    Ok(out)
}

/// Rebuilds calibrated blocks from stored recipes without recalibrating
/// the smoothing parameters.
pub fn rebuild_blocks(
    recipes: &[Vec<BlockRecipe>],
    data: &FunctionalDataset,
) -> Result<Vec<Vec<DesignBlock>>, BoostError> {
    recipes
        .iter()
        .map(|rs| {
            rs.iter()
                .map(|r| Ok(DesignBlock { recipe: r.clone(), design: r.design(data)?, penalty: r.penalty() }))
                .collect()
        })
        .collect()
}

/// Per-grid-point loss weights: trapezoidal spacing scaled to mean one.
pub(crate) fn loss_weights(grid: &Grid, hyper: &Hyper) -> Option<Vec<f64>> {
    if !hyper.grid_weighted_loss {
        return None;
    }
    let w = trapezoid_weights(grid.points());
    let total: f64 = w.iter().sum();
    let g = w.len() as f64;
    Some(w.iter().map(|v| v * g / total).collect())
}

/// Learners on the given curves of the training designs.
pub(crate) fn learners_for(
    blocks: &[Vec<DesignBlock>],
    rows: Option<&[usize]>,
) -> Result<Vec<Vec<Learner>>, BoostError> {
    blocks
        .iter()
        .map(|bs| {
            bs.iter()
                .map(|b| {
                    let design = match rows {
                        Some(r) => b.design.select_curves(r),
                        None => b.design.clone(),
                    };
                    Learner::new(design, &b.penalty)
                })
                .collect()
        })
        .collect()
}

/// A fitted model: everything needed to predict on new data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub grid: Grid,
    pub hyper: Hyper,
    pub recipes: Vec<Vec<BlockRecipe>>,
    pub offsets: Vec<f64>,
    pub history: Vec<Step>,
    pub risk_path: Vec<f64>,
    /// Completed boosting iterations.
    pub iterations: usize,
    /// Iteration used for prediction by default.
    pub m_stop: usize,
    pub ranges: SurfaceRanges,
    #[serde(skip)]
    training_predictors: Option<Vec<DMatrix<f64>>>,
}

impl FittedModel {
    /// Builds the blocks, initializes the offsets and runs
    /// `hyper.m_stop_max` boosting iterations.
    pub fn fit(data: &FunctionalDataset, spec: &ModelSpec, hyper: &Hyper) -> Result<Self, BoostError> {
        let blocks = build_blocks(spec, data)?;
        Self::fit_blocks(data, spec, hyper, &blocks)
    }

    /// As [`FittedModel::fit`] with prebuilt blocks.
    pub fn fit_blocks(
        data: &FunctionalDataset,
        spec: &ModelSpec,
        hyper: &Hyper,
        blocks: &[Vec<DesignBlock>],
    ) -> Result<Self, BoostError> {
        let family = family_by_id(&spec.family)?;
        let offsets = offset_init(family, data, hyper.offsets)?;
        let learners = learners_for(blocks, None)?;
        let weights = loss_weights(&data.grid, hyper);
        let mut engine = Engine::new(family, &data.response, &learners, offsets.clone(), hyper, weights)?;
        engine.run(hyper.m_stop_max, |_, _| Ok(()))?;
        let state = engine.into_state();
        log::info!(
            "fitted {} iterations, training risk {:.6} -> {:.6}",
            state.iteration,
            state.risk_path[0],
            state.risk_path[state.iteration]
        );
        Ok(Self {
            version: ARTIFACT_VERSION,
            spec: spec.clone(),
            grid: data.grid.clone(),
            hyper: hyper.clone(),
            recipes: blocks.iter().map(|bs| bs.iter().map(|b| b.recipe.clone()).collect()).collect(),
            offsets,
            history: state.history,
            risk_path: state.risk_path,
            iterations: state.iteration,
            m_stop: state.iteration,
            ranges: SurfaceRanges::from_data(data),
            training_predictors: Some(state.predictors),
        })
    }

    /// A model with fixed coefficients, stored as one step per nonzero
    /// block at iteration 1.
    pub fn from_coefficients(
        spec: ModelSpec,
        grid: Grid,
        recipes: Vec<Vec<BlockRecipe>>,
        offsets: Vec<f64>,
        coefficients: &[Vec<DVector<f64>>],
        ranges: SurfaceRanges,
    ) -> Result<Self, BoostError> {
        if recipes.len() != offsets.len() || coefficients.len() != recipes.len() {
            return Err(BoostError::Artifact("offsets, recipes and coefficients disagree".into()));
        }
        let mut history = Vec::new();
        for (q, (rs, cs)) in recipes.iter().zip(coefficients).enumerate() {
            if rs.len() != cs.len() {
                return Err(BoostError::Artifact(format!("parameter {q}: recipes and coefficients disagree")));
            }
            for (j, (r, c)) in rs.iter().zip(cs).enumerate() {
                if r.n_coef() != c.len() {
                    return Err(BoostError::Artifact(format!(
                        "block '{}' has {} coefficients, got {}",
                        r.name(),
                        r.n_coef(),
                        c.len()
                    )));
                }
                if c.iter().any(|v| *v != 0.0) {
                    history.push(Step { iteration: 1, q, j, increment: c.as_slice().to_vec() });
                }
            }
        }
        Ok(Self {
            version: ARTIFACT_VERSION,
            spec,
            grid,
            hyper: Hyper::new(1.0, 1),
            recipes,
            offsets,
            history,
            risk_path: Vec::new(),
            iterations: 1,
            m_stop: 1,
            ranges,
            training_predictors: None,
        })
    }

    pub fn family(&self) -> Result<&'static dyn Family, BoostError> {
        Ok(family_by_id(&self.spec.family)?)
    }

    /// Predictors on the training data after the last iteration, as
    /// accumulated during fitting. Absent on a deserialized model.
    pub fn training_predictors(&self) -> Option<&[DMatrix<f64>]> {
        self.training_predictors.as_deref()
    }

    pub fn set_mstop(&mut self, m: usize) -> Result<(), BoostError> {
        if m > self.iterations {
            return Err(BoostError::Hyper(format!("m_stop {m} exceeds the {} fitted iterations", self.iterations)));
        }
        self.m_stop = m;
        Ok(())
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        self.recipes.iter().map(|rs| rs.iter().map(|r| r.n_coef()).collect()).collect()
    }

    /// Coefficients after `m` iterations (default: `m_stop`).
    pub fn coefficients(&self, m: Option<usize>) -> Result<Vec<Vec<DVector<f64>>>, BoostError> {
        let m = self.resolve(m)?;
        Ok(replay_coefficients(&self.shapes(), &self.history, m))
    }

    fn resolve(&self, m: Option<usize>) -> Result<usize, BoostError> {
        let m = m.unwrap_or(self.m_stop);
        if m > self.iterations {
            return Err(BoostError::Prediction(format!(
                "iteration {m} requested but only {} were fitted",
                self.iterations
            )));
        }
        Ok(m)
    }

    /// Indices of the learners of parameter `q` selected up to `m`.
    pub fn selected(&self, q: usize, m: Option<usize>) -> Result<Vec<usize>, BoostError> {
        let m = self.resolve(m)?;
        let mut js: Vec<usize> = self.history.iter().filter(|s| s.iteration <= m && s.q == q).map(|s| s.j).collect();
        js.sort_unstable();
        js.dedup();
        Ok(js)
    }

    /// Additive predictors on `data` after `m` iterations.
    pub fn predictors(&self, data: &FunctionalDataset, m: Option<usize>) -> Result<Vec<DMatrix<f64>>, BoostError> {
        if !data.grid.matches(&self.grid) {
            return Err(BoostError::Prediction(
                "new data are observed on a different grid than the training data".into(),
            ));
        }
        let coef = self.coefficients(m)?;
        let (n, g) = (data.n_curves(), data.n_grid());
        let mut out = Vec::with_capacity(self.offsets.len());
        for (q, recipes) in self.recipes.iter().enumerate() {
            let mut h = DMatrix::from_element(n, g, self.offsets[q]);
            for (j, r) in recipes.iter().enumerate() {
                if coef[q][j].iter().all(|v| *v == 0.0) {
                    continue;
                }
                let design = r.design(data).map_err(|e| match e {
                    crate::basis::BasisError::Prediction(msg) => BoostError::Prediction(msg),
                    other => BoostError::Basis(other),
                })?;
                h += design.mul(&coef[q][j]);
            }
            out.push(h);
        }
        Ok(out)
    }

    /// Parameter surfaces on `data` after `m` iterations.
    pub fn predict(&self, data: &FunctionalDataset, m: Option<usize>) -> Result<ParamSurfaces, BoostError> {
        let family = self.family()?;
        Ok(ParamSurfaces::from_predictors(family, self.predictors(data, m)?))
    }

    /// Effect surfaces of the selected learners of parameter `q`, evaluated
    /// on time points `t`.
    pub fn effect_surfaces(&self, q: usize, t: &[f64], m: Option<usize>) -> Result<Vec<EffectSurface>, BoostError> {
        let coef = self.coefficients(m)?;
        self.selected(q, m)?
            .into_iter()
            .map(|j| Ok(self.recipes[q][j].surface(&coef[q][j], t, &self.ranges)?))
            .collect()
    }

    /// Effect surface of learner `j` of parameter `q` (zero if unselected).
    pub fn effect_surface(&self, q: usize, j: usize, t: &[f64], m: Option<usize>) -> Result<EffectSurface, BoostError> {
        let coef = self.coefficients(m)?;
        Ok(self.recipes[q][j].surface(&coef[q][j], t, &self.ranges)?)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), BoostError> {
        serde_json::to_writer(writer, self).map_err(|e| BoostError::Artifact(e.to_string()))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, BoostError> {
        let model: FittedModel = serde_json::from_reader(reader).map_err(|e| BoostError::Artifact(e.to_string()))?;
        if model.version != ARTIFACT_VERSION {
            return Err(BoostError::Artifact(format!(
                "artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                model.version
            )));
        }
        let shapes = model.shapes();
        for s in &model.history {
            let ok = shapes.get(s.q).and_then(|r| r.get(s.j)).is_some_and(|&k| k == s.increment.len());
            if !ok || s.iteration > model.iterations {
                return Err(BoostError::Artifact("selection history does not match the blocks".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), BoostError> {
        let f = std::fs::File::create(path).map_err(|e| BoostError::Artifact(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(f);
        self.to_writer(&mut w)?;
        w.flush().map_err(|e| BoostError::Artifact(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BoostError> {
        let f = std::fs::File::open(path).map_err(|e| BoostError::Artifact(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}
