//! Simulation scenarios with known true effects.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curves::{draw_gaussian_curves, draw_general_curves, DependencyLevel};
use super::growth::{parametric_growth_curve, GrowthCurve};
use super::random_spline::{standard_normal_matrix, RandomSplineDef};
use super::SimulateError;
use crate::basis::{
    build_effect_design, row_tensor, BlockRecipe, CovariatePart, EffectSurface, SplineBasisDef, SurfaceRanges, TimePart,
};
use crate::boost::{FittedModel, Hyper};
use crate::data::{drop_last_point, numeric_derivative, Covariate, FunctionalCovariate, FunctionalDataset, Grid};
use crate::families::{family_by_id, Family, GAUSSIAN, ZA_GAMMA};
use crate::terms::{BasisSettings, ModelSpec, TermDescriptor, TermKind};

/// Format version of serialized truths.
pub const TRUTH_VERSION: u32 = 1;

/// Change points of the step intercepts in the application-style scenario.
pub const APPLICATION_CHANGEPOINTS: [f64; 3] = [12.25, 18.5, 33.5];

const APPLICATION_HORIZON: f64 = 48.0;
const MITC_LEVELS: [&str; 4] = ["0", "0.005", "0.01", "0.1"];
/// Points on which covariate-direction random splines are calibrated.
const COVARIATE_CALIBRATION_POINTS: usize = 101;
const SIMULATION_DF: f64 = 13.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioModel {
    /// Gaussian; smooth effects of `z1`, `z2` and their interaction on the
    /// mean, a smooth effect of `z1` on the log standard deviation.
    Continuous,
    /// Gaussian; group effects of `g1`, `g2` on the mean and of `g1` on the
    /// log standard deviation.
    Categorical,
    /// Zero-adjusted gamma with step intercepts, nested group effects and
    /// historical effects of a growth curve and its derivative.
    Application,
}

impl ScenarioModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioModel::Continuous => "continuous",
            ScenarioModel::Categorical => "categorical",
            ScenarioModel::Application => "application",
        }
    }
}

impl std::str::FromStr for ScenarioModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "categorical" => Ok(Self::Categorical),
            "application" | "application-style" | "application_style" => Ok(Self::Application),
            other => Err(format!("unknown scenario model '{other}'")),
        }
    }
}

fn default_size() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

/// Settings of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ScenarioModel,
    #[serde(default = "default_size")]
    pub n_curves: usize,
    #[serde(default = "default_size")]
    pub n_grid: usize,
    #[serde(default)]
    pub level: DependencyLevel,
    /// Mean variance of the mean effects, `σ̄²_μ`.
    #[serde(default = "default_scale")]
    pub sigma2_mu: f64,
    /// Variance of the exponentiated scale effects, `σ̄²_σ`.
    #[serde(default = "default_scale")]
    pub sigma2_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(model: ScenarioModel, n_curves: usize, n_grid: usize, level: DependencyLevel, seed: u64) -> Self {
        Self { model, n_curves, n_grid, level, sigma2_mu: 1.0, sigma2_sigma: 1.0, seed }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.n_curves < 2 {
            return Err(SimulateError::Config(format!("n_curves = {} must be at least 2", self.n_curves)));
        }
        if self.n_grid < 3 {
            return Err(SimulateError::Config(format!("n_grid = {} must be at least 3", self.n_grid)));
        }
        for (key, v) in [("sigma2_mu", self.sigma2_mu), ("sigma2_sigma", self.sigma2_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimulateError::Config(format!("{key} = {v} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// Variance `τ²` of a normal `Z` with `Var(exp(Z)) = σ̄²_σ`.
pub fn tau2(sigma2_sigma: f64) -> f64 {
    -(2f64.ln()) + ((4.0 * sigma2_sigma + 1.0).sqrt() + 1.0).ln()
}

/// One true effect: a block recipe calibrated on the simulated covariates
/// and its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEffect {
    pub q: usize,
    pub recipe: BlockRecipe,
    pub coef: Vec<f64>,
}

impl TrueEffect {
    pub fn name(&self) -> String {
        self.recipe.name()
    }

    /// Contribution to the predictor on `data` (N×G).
    pub fn values(&self, data: &FunctionalDataset) -> Result<DMatrix<f64>, SimulateError> {
        Ok(self.recipe.design(data)?.mul(&DVector::from_column_slice(&self.coef)))
    }
}

/// Ground truth of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub version: u32,
    pub config: ScenarioConfig,
    pub family: String,
    pub grid: Grid,
    pub covariates: IndexMap<String, Covariate>,
    pub offsets: Vec<f64>,
    pub effects: Vec<TrueEffect>,
    pub ranges: SurfaceRanges,
}

impl ScenarioTruth {
    pub fn family(&self) -> Result<&'static dyn Family, SimulateError> {
        Ok(family_by_id(&self.family)?)
    }

    /// The simulated covariates with an all-zero response.
    pub fn covariate_data(&self) -> Result<FunctionalDataset, SimulateError> {
        let n = self.covariates.values().next().map(|c| c.n_rows()).unwrap_or(0);
        Ok(FunctionalDataset::new(DMatrix::zeros(n, self.grid.len()), self.grid.clone(), self.covariates.clone())?)
    }

    /// True predictors on `data`.
    pub fn predictors_on(&self, data: &FunctionalDataset) -> Result<Vec<DMatrix<f64>>, SimulateError> {
        let (n, g) = (data.n_curves(), data.n_grid());
        let mut h: Vec<DMatrix<f64>> = self.offsets.iter().map(|&o| DMatrix::from_element(n, g, o)).collect();
        for e in &self.effects {
            h[e.q] += e.values(data)?;
        }
        Ok(h)
    }

    /// True predictors on the simulated covariates.
    pub fn predictors(&self) -> Result<Vec<DMatrix<f64>>, SimulateError> {
        self.predictors_on(&self.covariate_data()?)
    }

    /// True natural-scale parameters on the simulated covariates.
    pub fn params(&self) -> Result<Vec<DMatrix<f64>>, SimulateError> {
        let family = self.family()?;
        Ok(self.predictors()?.into_iter().zip(family.links()).map(|(h, l)| h.map(|v| l.inverse(v))).collect())
    }

    /// Effect surface on the reporting grid; intercepts include the offset.
    pub fn effect_surface(&self, k: usize) -> Result<EffectSurface, SimulateError> {
        let e = &self.effects[k];
        let mut s = e.recipe.surface(&DVector::from_column_slice(&e.coef), self.grid.points(), &self.ranges)?;
        if e.recipe.term.kind == TermKind::FunctionalIntercept {
            s.values.iter_mut().for_each(|v| *v += self.offsets[e.q]);
        }
        Ok(s)
    }

    /// Model specification for fitting data of this scenario with the
    /// simulation defaults.
    pub fn fit_spec(&self) -> ModelSpec {
        fit_spec(self.config.model, SIMULATION_DF)
    }

    /// The truth as a fixed model, e.g. for evaluating it against itself.
    pub fn as_model(&self) -> Result<FittedModel, SimulateError> {
        let family = self.family()?;
        let q = family.n_params();
        let mut recipes: Vec<Vec<BlockRecipe>> = vec![Vec::new(); q];
        let mut coefs: Vec<Vec<DVector<f64>>> = vec![Vec::new(); q];
        for e in &self.effects {
            recipes[e.q].push(e.recipe.clone());
            coefs[e.q].push(DVector::from_column_slice(&e.coef));
        }
        let spec = ModelSpec::new(
            &self.family,
            recipes.iter().map(|rs| rs.iter().map(|r| r.term.clone()).collect()).collect(),
        );
        Ok(FittedModel::from_coefficients(
            spec,
            self.grid.clone(),
            recipes,
            self.offsets.clone(),
            &coefs,
            self.ranges.clone(),
        )?)
    }

    /// Writes every true effect surface as `<param>_<k>.csv` into `dir`
    /// and returns the file names.
    pub fn write_surfaces(&self, dir: &Path) -> Result<Vec<String>, SimulateError> {
        let family = self.family()?;
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, e) in self.effects.iter().enumerate() {
            let name = format!("{}_{k}.csv", family.param_names()[e.q]);
            let f = std::fs::File::create(dir.join(&name))?;
            self.effect_surface(k)?.write_csv(std::io::BufWriter::new(f))?;
            files.push(name);
        }
        Ok(files)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), SimulateError> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| SimulateError::Manifest(e.to_string()))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, SimulateError> {
        let truth: ScenarioTruth =
            serde_json::from_reader(reader).map_err(|e| SimulateError::Manifest(e.to_string()))?;
        if truth.version != TRUTH_VERSION {
            return Err(SimulateError::Manifest(format!(
                "truth version {} is not supported (expected {TRUTH_VERSION})",
                truth.version
            )));
        }
        for e in &truth.effects {
            if e.q >= truth.offsets.len() || e.coef.len() != e.recipe.n_coef() {
                return Err(SimulateError::Manifest(format!("effect '{}' is inconsistent", e.name())));
            }
        }
        Ok(truth)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimulateError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimulateError> {
        Self::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn basis(n_basis: usize) -> BasisSettings {
    BasisSettings::new(3, n_basis, 2)
}

fn intercept(n_basis: usize) -> TermDescriptor {
    TermDescriptor::functional_intercept().with_time_basis(basis(n_basis))
}

fn smooth(cov: &str, n_time: usize) -> TermDescriptor {
    TermDescriptor::new(TermKind::SmoothScalar, &[cov]).with_covariate_basis(basis(6)).with_time_basis(basis(n_time))
}

fn interaction(n_time: usize) -> TermDescriptor {
    TermDescriptor::new(TermKind::SmoothInteraction, &["z1", "z2"])
        .with_covariate_basis(basis(6))
        .with_time_basis(basis(n_time))
}

fn group(cov: &str, n_time: usize) -> TermDescriptor {
    TermDescriptor::new(TermKind::GroupIntercept, &[cov]).with_time_basis(basis(n_time))
}

/// True effects per parameter with their share of the scale.
fn truth_terms(model: ScenarioModel, sigma2_mu: f64, sigma2_sigma: f64) -> Vec<(usize, TermDescriptor, f64)> {
    let t2 = tau2(sigma2_sigma);
    match model {
        ScenarioModel::Continuous => {
            // The interaction enters the mean variance with weight 1/8.
            let share = sigma2_mu / (3.0 + 1.0 / 8.0);
            vec![
                (0, intercept(8), share),
                (0, smooth("z1", 6), share),
                (0, smooth("z2", 6), share),
                (0, interaction(8), share / 8.0),
                (1, intercept(8), t2 / 2.0),
                (1, smooth("z1", 6), t2 / 2.0),
            ]
        }
        ScenarioModel::Categorical => vec![
            (0, intercept(8), sigma2_mu / 3.0),
            (0, group("g1", 8), sigma2_mu / 3.0),
            (0, group("g2", 8), sigma2_mu / 3.0),
            (1, intercept(8), t2 / 2.0),
            (1, group("g1", 8), t2 / 2.0),
        ],
        ScenarioModel::Application => Vec::new(),
    }
}

/// Model specification used to fit a scenario's data: the true effect
/// structure with a 20-function intercept basis and common `df`.
pub fn fit_spec(model: ScenarioModel, df: f64) -> ModelSpec {
    match model {
        ScenarioModel::Continuous => ModelSpec::new(
            "gaussian",
            vec![
                vec![
                    intercept(20).with_df(df),
                    smooth("z1", 6).with_df(df),
                    smooth("z2", 6).with_df(df),
                    interaction(8).with_df(df),
                ],
                vec![intercept(20).with_df(df), smooth("z1", 6).with_df(df)],
            ],
        ),
        ScenarioModel::Categorical => ModelSpec::new(
            "gaussian",
            vec![
                vec![intercept(20).with_df(df), group("g1", 8).with_df(df), group("g2", 8).with_df(df)],
                vec![intercept(20).with_df(df), group("g1", 8).with_df(df)],
            ],
        ),
        ScenarioModel::Application => za_gamma_template_spec(),
    }
}

/// Zero-adjusted gamma model with, for every parameter, a functional
/// intercept, a step intercept at the zoom change points, group effects of
/// `mitc` and of `batch` nested in `mitc`, and historical effects of the
/// standardized covariate curves `C` and `dC`.
pub fn za_gamma_template_spec() -> ModelSpec {
    let terms = || {
        vec![
            intercept(10).with_df(6.0),
            TermDescriptor::new(TermKind::StepIntercept, &[])
                .with_changepoints(APPLICATION_CHANGEPOINTS.to_vec())
                .with_df(4.0),
            group("mitc", 8).with_df(6.0),
            group("batch", 8).with_within("mitc").with_df(6.0),
            TermDescriptor::new(TermKind::Historical, &["C"])
                .with_covariate_basis(basis(6))
                .with_time_basis(basis(6))
                .with_df(6.0)
                .standardized(),
            TermDescriptor::new(TermKind::Historical, &["dC"])
                .with_covariate_basis(basis(6))
                .with_time_basis(basis(6))
                .with_df(6.0)
                .standardized(),
        ]
    };
    ModelSpec::new("za-gamma", vec![terms(), terms(), terms()])
}

fn scalar<'a>(data: &'a FunctionalDataset, name: &str) -> Result<&'a [f64], SimulateError> {
    match data.covariate(name) {
        Some(Covariate::Scalar { values }) => Ok(values),
        _ => Err(SimulateError::Config(format!("scalar covariate '{name}' missing"))),
    }
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64).collect()
}

/// Random-spline transform `ΩW` of a covariate direction, calibrated on an
/// equidistant grid over the covariate range.
fn covariate_transform(def: &SplineBasisDef) -> Result<DMatrix<f64>, SimulateError> {
    RandomSplineDef::new(def.degree, def.n_basis, 2, 1.0, 0.8, def.range)?
        .transform(&linspace(def.range, COVARIATE_CALIBRATION_POINTS))
}

/// Draws the coefficients of a random effect in the block parametrization
/// of `recipe`.
///
/// The raw tensor-product coefficients `A_x Ξ A_tᵀ` (with `A = ΩW` per
/// direction and `Ξ` standard normal) are projected onto the constrained
/// block space by least squares on the observed covariates, and the result
/// is scaled so that its expected mean variance over all N·G cells is
/// `scale`.
pub fn draw_effect_coefficients<R: Rng + ?Sized>(
    recipe: &BlockRecipe,
    data: &FunctionalDataset,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SimulateError> {
    let t = data.grid.points();
    let n = data.n_curves();
    let tdef = match &recipe.time {
        TimePart::Spline { def, .. } => def,
        TimePart::Step { .. } => {
            return Err(SimulateError::Config(format!("no random law for the step effect '{}'", recipe.name())))
        }
    };
    let at = RandomSplineDef::new(tdef.degree, tdef.n_basis, 2, 1.0, 0.8, tdef.range)?.transform(t)?;
    let (x, ax, z) = match &recipe.cov {
        CovariatePart::Constant => (DMatrix::from_element(n, 1, 1.0), DMatrix::identity(1, 1), DMatrix::identity(1, 1)),
        CovariatePart::Smooth { covariate, def, z, .. } => {
            (def.eval(scalar(data, covariate)?)?, covariate_transform(def)?, z.clone())
        }
        CovariatePart::Group { covariate, levels, slope: None, z } => {
            let codes = match data.covariate(covariate) {
                Some(Covariate::Categorical { codes, levels: have }) if have == levels => codes,
                _ => return Err(SimulateError::Config(format!("categorical covariate '{covariate}' missing"))),
            };
            let mut d = DMatrix::zeros(n, levels.len());
            for (i, &c) in codes.iter().enumerate() {
                d[(i, c)] = 1.0;
            }
            (d, DMatrix::identity(levels.len(), levels.len()), z.clone())
        }
        CovariatePart::SmoothPair { covariates, defs, z, .. } => {
            let b1 = defs[0].eval(scalar(data, &covariates[0])?)?;
            let b2 = defs[1].eval(scalar(data, &covariates[1])?)?;
            let a = covariate_transform(&defs[0])?.kronecker(&covariate_transform(&defs[1])?);
            (row_tensor(&b1, &b2)?, a, z.clone())
        }
        _ => return Err(SimulateError::Config(format!("no random law for the effect '{}'", recipe.name()))),
    };
    let xz = &x * &z;
    let svd = xz.clone().svd(true, true);
    let top = svd.singular_values.max();
    // S = (XZ)⁺ X A_x maps raw coefficients to the constrained basis.
    let s = svd
        .solve(&(&x * &ax), 1e-10 * top)
        .map_err(|e| SimulateError::Dimension(format!("projection of '{}': {e}", recipe.name())))?;
    let m_norm = (&xz * &s).norm_squared();
    let nt_norm = (tdef.eval(t)? * &at).norm_squared();
    let xi = standard_normal_matrix(ax.ncols(), at.ncols(), rng);
    let theta = s * xi * at.transpose();
    let denom = m_norm * nt_norm;
    if scale > 0.0 && !(denom > 0.0) {
        return Err(SimulateError::Dimension(format!("effect '{}' has no variance left", recipe.name())));
    }
    let f = if scale > 0.0 { (scale * (n * t.len()) as f64 / denom).sqrt() } else { 0.0 };
    // Row-major over (covariate, time) coefficients.
    let mut coef = Vec::with_capacity(theta.len());
    for r in theta.row_iter() {
        coef.extend(r.iter().map(|v| v * f));
    }
    Ok(coef)
}

fn uniform_levels<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Covariate {
    Covariate::Categorical {
        levels: ["1", "2", "3", "4"].iter().map(|s| s.to_string()).collect(),
        codes: (0..n).map(|_| rng.random_range(0..4)).collect(),
    }
}

/// Simulates a dataset and its ground truth.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<(FunctionalDataset, ScenarioTruth), SimulateError> {
    config.validate()?;
    match config.model {
        ScenarioModel::Continuous | ScenarioModel::Categorical => generate_gaussian(config),
        ScenarioModel::Application => generate_application(config),
    }
}

fn generate_gaussian(config: &ScenarioConfig) -> Result<(FunctionalDataset, ScenarioTruth), SimulateError> {
    let (n, g) = (config.n_curves, config.n_grid);
    let grid = Grid::uniform(0.0, 10.0, g)?;
    let mut rng_cov = stream(config.seed, 1);
    let mut covariates = IndexMap::new();
    match config.model {
        ScenarioModel::Continuous => {
            for name in ["z1", "z2"] {
                let values = (0..n).map(|_| rng_cov.random::<f64>()).collect();
                covariates.insert(name.to_string(), Covariate::Scalar { values });
            }
        }
        _ => {
            for name in ["g1", "g2"] {
                covariates.insert(name.to_string(), uniform_levels(&mut rng_cov, n));
            }
        }
    }
    let shell = FunctionalDataset::new(DMatrix::zeros(n, g), grid.clone(), covariates.clone())?;
    let mut rng_eff = stream(config.seed, 2);
    let mut effects = Vec::new();
    for (q, term, scale) in truth_terms(config.model, config.sigma2_mu, config.sigma2_sigma) {
        let recipe = build_effect_design(&term, &shell)?.recipe;
        let coef = draw_effect_coefficients(&recipe, &shell, scale, &mut rng_eff)?;
        effects.push(TrueEffect { q, recipe, coef });
    }
    let truth = ScenarioTruth {
        version: TRUTH_VERSION,
        config: config.clone(),
        family: GAUSSIAN.id().to_string(),
        grid: grid.clone(),
        covariates: covariates.clone(),
        offsets: vec![0.0, 0.0],
        effects,
        ranges: SurfaceRanges::from_data(&shell),
    };
    let h = truth.predictors_on(&shell)?;
    let sigma = h[1].map(f64::exp);
    let y = draw_gaussian_curves(&h[0], &sigma, config.level, grid.points(), &mut stream(config.seed, 3))?;
    Ok((FunctionalDataset::new(y, grid, covariates)?, truth))
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Grid, covariates and `mitc` codes of the application-style scenario.
type ApplicationCovariates = (Grid, IndexMap<String, Covariate>, Vec<usize>);

/// Covariates of the application-style scenario: `mitc` (4 levels),
/// `batch` (two per `mitc` level), a logistic growth curve `C` and its
/// forward-difference derivative `dC`, on `g` points of `[0, 48)`.
fn application_covariates(n: usize, g: usize, rng: &mut ChaCha8Rng) -> Result<ApplicationCovariates, SimulateError> {
    let full = Grid::uniform(0.0, APPLICATION_HORIZON, g + 1)?;
    let mitc: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let batch: Vec<usize> = (0..n).map(|i| 2 * (i % 4) + (i / 4) % 2).collect();
    let mut c = DMatrix::zeros(n, g + 1);
    for (i, &level) in mitc.iter().enumerate() {
        let curve = GrowthCurve::Logistic {
            y0: 0.05 * rng.random_range(0.7..1.3),
            y_max: 20.0 * rng.random_range(0.8..1.2),
            rate: 0.3 * rng.random_range(0.8..1.2) * (1.0 - 0.1 * level as f64),
        };
        let v = parametric_growth_curve(&curve, full.points())?;
        c.row_mut(i).copy_from_slice(&v);
    }
    let c_full = FunctionalCovariate::new(c, full)?;
    let dc = numeric_derivative(&c_full)?;
    let c = drop_last_point(&c_full)?;
    let grid = c.grid.clone();
    let mut covariates = IndexMap::new();
    covariates.insert(
        "mitc".to_string(),
        Covariate::Categorical { levels: MITC_LEVELS.iter().map(|s| s.to_string()).collect(), codes: mitc.clone() },
    );
    covariates.insert(
        "batch".to_string(),
        Covariate::Categorical { levels: (1..=8).map(|b| format!("b{b}")).collect(), codes: batch },
    );
    covariates.insert("C".to_string(), Covariate::Functional(c));
    covariates.insert("dC".to_string(), Covariate::Functional(dc));
    Ok((grid, covariates, mitc))
}

/// Synthetic truth for the application-style scenario: the template model
/// fitted to pseudo-data with plausible growth, scale and zero-probability
/// patterns. The returned response is redrawn from that truth.
fn generate_application(config: &ScenarioConfig) -> Result<(FunctionalDataset, ScenarioTruth), SimulateError> {
    let (n, g) = (config.n_curves, config.n_grid);
    let mut rng_cov = stream(config.seed, 1);
    let (grid, covariates, mitc) = application_covariates(n, g, &mut rng_cov)?;
    let t = grid.points();
    let c = match &covariates["C"] {
        Covariate::Functional(f) => f.values.clone(),
        _ => unreachable!("built above"),
    };
    // Pointwise standardized C.
    let mut cz = c.clone();
    for mut col in cz.column_iter_mut() {
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt().max(1e-12);
        col.iter_mut().for_each(|v| *v = (*v - m) / sd);
    }
    let mut rng_eff = stream(config.seed, 2);
    let batch_shift: Vec<f64> = (0..8).map(|_| 0.05 * rng_eff.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let batch = match &covariates["batch"] {
        Covariate::Categorical { codes, .. } => codes.clone(),
        _ => unreachable!("built above"),
    };
    let base = parametric_growth_curve(&GrowthCurve::Logistic { y0: 0.02, y_max: 8.0, rate: 0.3 }, t)?;
    let zoom = |tv: f64| APPLICATION_CHANGEPOINTS.iter().take_while(|&&cp| tv >= cp).count();
    let cv_steps = [0.0, 0.1, 0.2, 0.25];
    let p_steps = [0.0, 0.4, -0.3, 0.2];
    let mut params = vec![DMatrix::zeros(n, g), DMatrix::zeros(n, g), DMatrix::zeros(n, g)];
    for i in 0..n {
        let m = mitc[i] as f64;
        for (k, &tv) in t.iter().enumerate() {
            params[0][(i, k)] = base[k] * (0.1 * m - 0.15 * cz[(i, k)] + batch_shift[batch[i]]).exp();
            params[1][(i, k)] = 0.35 * (cv_steps[zoom(tv)] + 0.05 * m).exp();
            params[2][(i, k)] = logistic(-2.0 + p_steps[zoom(tv)] + 0.15 * m + 0.2 * cz[(i, k)]);
        }
    }
    let pseudo_y = draw_general_curves(&ZA_GAMMA, &params, config.level, t, &mut stream(config.seed, 4))?;
    let pseudo = FunctionalDataset::new(pseudo_y, grid.clone(), covariates.clone())?;
    let spec = za_gamma_template_spec();
    let model = FittedModel::fit(&pseudo, &spec, &Hyper::new(0.1, 150))?;
    let coef = model.coefficients(None)?;
    let mut effects = Vec::new();
    for (q, recipes) in model.recipes.iter().enumerate() {
        for (j, recipe) in recipes.iter().enumerate() {
            if coef[q][j].iter().any(|v| *v != 0.0) {
                effects.push(TrueEffect { q, recipe: recipe.clone(), coef: coef[q][j].as_slice().to_vec() });
            }
        }
    }
    let truth = ScenarioTruth {
        version: TRUTH_VERSION,
        config: config.clone(),
        family: ZA_GAMMA.id().to_string(),
        grid: grid.clone(),
        covariates: covariates.clone(),
        offsets: model.offsets.clone(),
        effects,
        ranges: model.ranges.clone(),
    };
    let y = draw_general_curves(&ZA_GAMMA, &truth.params()?, config.level, t, &mut stream(config.seed, 3))?;
    Ok((FunctionalDataset::new(y, grid, covariates)?, truth))
}
