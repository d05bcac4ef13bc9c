use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use brainscore::encode::{LambdaGrid, ScoringMode};
use brainscore::groupstats::Alternative;
use brainscore::matrixio::DatasetManifest;

use crate::error::{CliError, CliResult, Stage};

/// A `run` configuration document. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Feature sets forming the concatenation hierarchy, baseline first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<Vec<String>>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    #[serde(default)]
    pub hrf: HrfParams,
    #[serde(default)]
    pub encode: EncodeParams,
    #[serde(default)]
    pub stats: StatsParams,
}

/// Feature set `a` scored against feature set `b` on the same targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub a: String,
    pub b: String,
}

impl Comparison {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{} vs {}", self.a, self.b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HrfParams {
    /// Min-max normalize activations before convolution.
    #[serde(default = "yes")]
    pub normalize: bool,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self { normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeParams {
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_n_lambdas")]
    pub n_lambdas: usize,
    #[serde(default)]
    pub mode: ScoringMode,
    /// Remove a linear trend from each response block before scoring.
    #[serde(default)]
    pub detrend: bool,
}

impl Default for EncodeParams {
    fn default() -> Self {
        Self {
            lambda_min: default_lambda_min(),
            lambda_max: default_lambda_max(),
            n_lambdas: default_n_lambdas(),
            mode: ScoringMode::default(),
            detrend: false,
        }
    }
}

impl EncodeParams {
    pub fn grid(&self) -> brainscore::Result<LambdaGrid> {
        LambdaGrid::log_spaced(self.lambda_min, self.lambda_max, self.n_lambdas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsParams {
    #[serde(default)]
    pub alternative: Alternative,
    #[serde(default = "default_q")]
    pub q: f64,
}

impl Default for StatsParams {
    fn default() -> Self {
        Self {
            alternative: Alternative::default(),
            q: default_q(),
        }
    }
}

fn yes() -> bool {
    true
}
fn default_lambda_min() -> f64 {
    10.0
}
fn default_lambda_max() -> f64 {
    1e8
}
fn default_n_lambdas() -> usize {
    20
}
fn default_q() -> f64 {
    0.05
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::input("config", format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    /// Fills every default and checks the document against the manifest.
    pub fn resolve(mut self, manifest: &DatasetManifest) -> CliResult<Self> {
        let known = |name: &str| manifest.feature(name).is_some();
        let hierarchy = match self.hierarchy.take() {
            Some(h) => h,
            None => default_hierarchy(manifest),
        };
        if hierarchy.is_empty() {
            return Err(CliError::input("config", "hierarchy is empty"));
        }
        for name in hierarchy.iter().chain(self.comparisons.iter().flat_map(|c| [&c.a, &c.b])) {
            if !known(name) {
                return Err(CliError::input("config", format!("feature set {name:?} is not in the manifest")));
            }
        }
        self.hierarchy = Some(hierarchy);
        self.encode.grid().stage("config")?;
        if !(self.stats.q > 0.0 && self.stats.q < 1.0) {
            return Err(CliError::input("config", format!("stats.q must lie in (0, 1), got {}", self.stats.q)));
        }
        if self.threads == Some(0) {
            return Err(CliError::input("config", "threads must be at least 1"));
        }
        Ok(self)
    }

    pub fn hierarchy(&self) -> &[String] {
        self.hierarchy.as_deref().unwrap_or_default()
    }
}

/// Features without a model tag, then the layers of the first tagged model
/// in layer order.
fn default_hierarchy(manifest: &DatasetManifest) -> Vec<String> {
    let mut out: Vec<String> = manifest
        .features
        .iter()
        .filter(|f| f.model.is_none())
        .map(|f| f.name.clone())
        .collect();
    if let Some(model) = manifest.features.iter().find_map(|f| f.model.clone()) {
        let mut layers: Vec<_> = manifest
            .features
            .iter()
            .filter(|f| f.model.as_deref() == Some(model.as_str()))
            .collect();
        layers.sort_by_key(|f| f.layer_index.unwrap_or(u32::MAX));
        out.extend(layers.into_iter().map(|f| f.name.clone()));
    }
    out
}
