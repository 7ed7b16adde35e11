//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;

use funboost::boost::Hyper;
use funboost::data::Schema;
use funboost::resample::ResampleMethod;
use funboost::simulate::ScenarioConfig;
use funboost::terms::ModelSpec;

use crate::error::CliError;

fn default_response() -> String {
    "y".to_string()
}

/// Where the data table lives and how its plain columns are typed.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    /// Prefix of the response columns (`<response>@<t>`).
    #[serde(default = "default_response")]
    pub response: String,
    /// Plain columns read as categorical with levels in sorted order.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Categorical columns with a declared level order.
    #[serde(default)]
    pub levels: IndexMap<String, Vec<String>>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { path: None, response: default_response(), categorical: Vec::new(), levels: IndexMap::new() }
    }
}

impl DataSection {
    pub fn schema(&self) -> Schema {
        let mut schema = Schema::new(self.response.clone());
        for name in &self.categorical {
            schema = schema.with_categorical(name.clone(), None);
        }
        for (name, levels) in &self.levels {
            schema = schema.with_categorical(name.clone(), Some(levels.clone()));
        }
        schema
    }
}

fn default_folds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleSection {
    pub method: ResampleMethod,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ResampleSection {
    fn default() -> Self {
        Self { method: ResampleMethod::Bootstrap, folds: default_folds(), seed: 0 }
    }
}

/// All sections a command may read; each command checks for the ones it
/// needs.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub resample: ResampleSection,
    pub simulate: Option<ScenarioConfig>,
    /// Output directory.
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let msg = e.into_inner().to_string();
            let msg = msg.lines().next().unwrap_or_default().trim().to_string();
            CliError::Config(format!("config key '{key}': {msg}"))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config '{}': {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths in a config file are relative to that file.
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.path.as_mut().map(rebase);
        cfg.output.as_mut().map(rebase);
        Ok(cfg)
    }

    pub fn model(&self) -> Result<&ModelSpec, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::Config("config key 'model': section is missing".into()))
    }

    pub fn simulate(&self) -> Result<&ScenarioConfig, CliError> {
        self.simulate.as_ref().ok_or_else(|| CliError::Config("config key 'simulate': section is missing".into()))
    }
}
