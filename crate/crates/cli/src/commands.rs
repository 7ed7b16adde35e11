//! Implementations of the subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use funboost::basis::CovariatePart;
use funboost::boost::{FittedModel, Hyper, Method};
use funboost::data::{FunctionalDataset, Schema};
use funboost::resample::{make_folds, oob_risk_path, select_mstop};
use funboost::simulate::{evaluate, generate_scenario, ScenarioModel, ScenarioTruth};
use funboost::terms::ModelSpec;

use crate::config::{DataSection, RunConfig};
use crate::error::CliError;

/// Flags shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mstop: Option<usize>,
    pub method: Option<Method>,
}

impl Overrides {
    fn load_config(&self) -> Result<RunConfig, CliError> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Err(CliError::Config("--config is required for this command".into())),
        }
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.and_then(|c| c.output.clone()))
            .unwrap_or_else(|| PathBuf::from("funboost-out"));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn data_path(&self, section: &DataSection) -> Result<PathBuf, CliError> {
        self.data
            .clone()
            .or_else(|| section.path.clone())
            .ok_or_else(|| CliError::Config("config key 'data.path': no data file given (use --data)".into()))
    }

    fn hyper(&self, cfg: &RunConfig) -> Hyper {
        let mut hyper = cfg.hyper.clone();
        if let Some(m) = self.mstop {
            hyper.m_stop_max = m;
        }
        if let Some(method) = self.method {
            hyper.method = method;
        }
        if let Some(seed) = self.seed {
            hyper.seed = seed;
        }
        hyper
    }
}

fn read_data(path: &Path, schema: &Schema) -> Result<FunctionalDataset, CliError> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("cannot open data '{}': {e}", path.display())))?;
    Ok(FunctionalDataset::read_csv(std::io::BufReader::new(f), schema)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_with<F, E>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
    E: std::fmt::Display,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn file_stem(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    s.trim_end_matches('_').to_string()
}

/// Schema that reads the categorical covariates a fitted model uses.
fn schema_for_model(model: &FittedModel, response: &str) -> Schema {
    let mut schema = Schema::new(response);
    for r in model.recipes.iter().flatten() {
        if let CovariatePart::Group { covariate, levels, .. } = &r.cov {
            schema.categorical.insert(covariate.clone(), Some(levels.clone()));
        }
        if let Some(parent) = &r.term.within {
            schema.categorical.entry(parent.clone()).or_insert(None);
        }
    }
    schema
}

fn write_risk_path(path: &Path, risk: &[f64]) -> Result<(), CliError> {
    write_with(path, |w| {
        writeln!(w, "iteration,risk")?;
        for (m, r) in risk.iter().enumerate() {
            writeln!(w, "{m},{}", funboost::data::fmt_num(*r))?;
        }
        Ok::<_, std::io::Error>(())
    })
}

/// Writes one CSV per selected effect into `dir` and returns the names.
fn write_effects(model: &FittedModel, dir: &Path, m: Option<usize>) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let names = model.family()?.param_names();
    let t = model.grid.points();
    let mut files = Vec::new();
    for (q, (param, recipes)) in names.iter().zip(&model.recipes).enumerate() {
        for j in model.selected(q, m)? {
            let name = format!("{param}_{j}_{}.csv", file_stem(&recipes[j].name()));
            let surface = model.effect_surface(q, j, t, m)?;
            write_with(&dir.join(&name), |w| surface.write_csv(w))?;
            files.push(name);
        }
    }
    Ok(files)
}

pub fn fit(o: &Overrides) -> Result<(), CliError> {
    let cfg = o.load_config()?;
    let spec = cfg.model()?;
    let data = read_data(&o.data_path(&cfg.data)?, &cfg.data.schema())?;
    let hyper = o.hyper(&cfg);
    let out = o.out_dir(Some(&cfg))?;
    let model = FittedModel::fit(&data, spec, &hyper)?;
    model.save(&out.join("model.json"))?;
    write_risk_path(&out.join("risk_path.csv"), &model.risk_path)?;
    let files = write_effects(&model, &out.join("effects"), None)?;
    println!(
        "fitted {} iterations; final risk {}; {} effect surfaces in {}",
        model.iterations,
        model.risk_path.last().copied().unwrap_or(f64::NAN),
        files.len(),
        out.display()
    );
    Ok(())
}

pub fn predict(o: &Overrides, model_path: &Path) -> Result<(), CliError> {
    let model = FittedModel::load(model_path)?;
    let cfg = o.config.as_ref().map(|p| RunConfig::load(p)).transpose()?;
    let schema = match &cfg {
        Some(c) => c.data.schema(),
        None => schema_for_model(&model, "y"),
    };
    let section = cfg.as_ref().map(|c| c.data.clone()).unwrap_or_default();
    let data = read_data(&o.data_path(&section)?, &schema)?;
    let out = o.out_dir(cfg.as_ref())?;
    let surfaces = model.predict(&data, o.mstop)?;
    let path = out.join("predictions.csv");
    write_with(&path, |w| surfaces.write_csv(w, &data.grid))?;
    println!("wrote {} curves x {} grid points to {}", data.n_curves(), data.n_grid(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct CvSummary {
    m_stop: usize,
    method: funboost::resample::ResampleMethod,
    folds: usize,
    failed_folds: usize,
    seed: u64,
    mean_risk: f64,
}

pub fn cv(o: &Overrides) -> Result<(), CliError> {
    let cfg = o.load_config()?;
    let spec = cfg.model()?;
    let data = read_data(&o.data_path(&cfg.data)?, &cfg.data.schema())?;
    let hyper = o.hyper(&cfg);
    let out = o.out_dir(Some(&cfg))?;
    let seed = o.seed.unwrap_or(cfg.resample.seed);
    if cfg.resample.folds < 2 {
        return Err(CliError::Config(format!(
            "config key 'resample.folds': {} folds given, at least 2 are needed",
            cfg.resample.folds
        )));
    }
    let plan = make_folds(data.n_curves(), cfg.resample.method, cfg.resample.folds, seed)?;
    let risk = oob_risk_path(&data, spec, &hyper, &plan)?;
    let m_stop = select_mstop(&risk)?;
    let mean = risk.mean_path()?;
    write_with(&out.join("risk.csv"), |w| risk.write_csv(w))?;
    write_risk_path(&out.join("mean_risk.csv"), &mean)?;
    let summary = CvSummary {
        m_stop,
        method: cfg.resample.method,
        folds: plan.folds.len(),
        failed_folds: risk.rows.iter().filter(|r| r.is_none()).count(),
        seed,
        mean_risk: mean[m_stop],
    };
    write_with(&out.join("selection.json"), |w| serde_json::to_writer_pretty(w, &summary))?;
    println!("selected m_stop = {m_stop} (mean out-of-sample risk {})", mean[m_stop]);
    Ok(())
}

/// Fit configuration emitted next to a simulated dataset.
#[derive(Serialize)]
struct EmittedConfig {
    data: EmittedData,
    model: ModelSpec,
    hyper: Hyper,
}

#[derive(Serialize)]
struct EmittedData {
    path: String,
    response: String,
    levels: indexmap::IndexMap<String, Vec<String>>,
}

pub fn simulate(o: &Overrides) -> Result<(), CliError> {
    let cfg = o.load_config()?;
    let mut scenario = cfg.simulate()?.clone();
    if let Some(seed) = o.seed {
        scenario.seed = seed;
    }
    let out = o.out_dir(Some(&cfg))?;
    let (data, truth) = generate_scenario(&scenario)?;
    write_with(&out.join("data.csv"), |w| data.write_csv(w))?;
    truth.save(&out.join("truth.json"))?;
    truth.write_surfaces(&out.join("truth"))?;
    let levels = data
        .covariates
        .iter()
        .filter_map(|(name, c)| match c {
            funboost::data::Covariate::Categorical { levels, .. } => Some((name.clone(), levels.clone())),
            _ => None,
        })
        .collect();
    let nu = if scenario.model == ScenarioModel::Application { 0.1 } else { 0.2 };
    let emitted = EmittedConfig {
        data: EmittedData { path: "data.csv".into(), response: "y".into(), levels },
        model: truth.fit_spec(),
        hyper: Hyper::new(nu, 500),
    };
    let text = toml::to_string(&emitted).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(out.join("fit.toml"), text).map_err(|e| CliError::io(&out.join("fit.toml"), e))?;
    println!(
        "simulated {} curves x {} grid points ({} scenario, {} level) into {}",
        data.n_curves(),
        data.n_grid(),
        scenario.model.as_str(),
        scenario.level.as_str(),
        out.display()
    );
    Ok(())
}

pub fn evaluate_cmd(o: &Overrides, model_path: &Path, truth_path: &Path) -> Result<(), CliError> {
    let model = FittedModel::load(model_path)?;
    let truth = ScenarioTruth::load(truth_path)?;
    let cfg = o.config.as_ref().map(|p| RunConfig::load(p)).transpose()?;
    let out = o.out_dir(cfg.as_ref())?;
    let ev = evaluate(&model, &truth, o.mstop)?;
    write_with(&out.join("metrics.csv"), |w| ev.write_csv(w))?;
    println!("mean KLD {}; {} effects evaluated", ev.mean_kld, ev.effects.len());
    Ok(())
}
