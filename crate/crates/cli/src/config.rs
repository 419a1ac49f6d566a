//! Experiment configuration files.

use crate::error::CliError;
use geobayes::estimator::EstimatorKind;
use geobayes::manifold::{ManifoldDescriptor, QuadratureGrid};
use geobayes::maps::{MapDescriptor, MapKind};
use geobayes::prior::PriorForm;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Where the prior comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    Cosine { amplitude: f64, axis: usize },
    /// Density values at the grid nodes, one CSV row per node.
    GridFile { path: PathBuf },
    /// The largest eigenvector of L (or L_a with a flat-measure weight).
    SolveOptimal,
}

/// Flat-measure weight a for the weighted minimax problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant { value: f64 },
    /// a = 1 + amplitude · cos(x[axis]).
    Cosine { amplitude: f64, axis: usize },
    GridFile { path: PathBuf },
}

/// Monte Carlo sample counts: a fixed count per noise level, or N = scale/ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SampleSpec {
    pub per_level: Option<usize>,
    pub scale: Option<f64>,
}

impl SampleSpec {
    pub fn at(&self, epsilon: f64) -> usize {
        match (self.per_level, self.scale) {
            (Some(n), _) => n,
            (None, Some(s)) => (s / epsilon).round() as usize,
            (None, None) => 0,
        }
    }
}

fn default_quadrature() -> usize {
    geobayes::estimator::DEFAULT_QUADRATURE_RESOLUTION
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Plugin, EstimatorKind::SecondOrder]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub manifold: ManifoldDescriptor,
    pub map: MapKind,
    pub prior: PriorSpec,
    #[serde(default)]
    pub weight: Option<WeightSpec>,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub samples: Option<SampleSpec>,
    /// Grid resolution per coordinate axis.
    pub resolution: Vec<usize>,
    #[serde(default = "default_quadrature")]
    pub quadrature_resolution: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_true")]
    pub common_random_numbers: bool,
    /// Ambient points for `estimate`, one CSV row per point.
    #[serde(default)]
    pub points: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// A parsed configuration with its source text and location.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    pub path: PathBuf,
    pub hash: String,
}

/// SHA-256 of the git blob object for `content`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn config_error(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse and validate; relative file references resolve against the
    /// directory of `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| config_error(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PriorSpec::GridFile { path } = &mut config.prior {
            resolve(path);
        }
        if let Some(WeightSpec::GridFile { path }) = &mut config.weight {
            resolve(path);
        }
        if let Some(p) = &mut config.points {
            resolve(p);
        }
        if let Some(p) = &mut config.output {
            resolve(p);
        }
        let loaded = Self { hash: content_hash(text.as_bytes()), text: text.to_string(), path: path.to_path_buf(), config };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        let err = |msg: String| config_error(&self.path, msg);
        c.manifold.validate().map_err(|e| err(format!("manifold: {e}")))?;
        MapDescriptor::new(&c.manifold, c.map.clone()).map_err(|e| err(format!("map: {e}")))?;
        QuadratureGrid::new(&c.manifold, &c.resolution).map_err(|e| err(format!("resolution: {e}")))?;
        if c.epsilons.is_empty() {
            return Err(err("epsilons: at least one noise level is required".into()));
        }
        if let Some(e) = c.epsilons.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(err(format!("epsilons: noise levels must be positive, got {e}")));
        }
        if let Some(s) = &c.samples {
            match (s.per_level, s.scale) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(err("samples: give exactly one of per-level and scale".into()));
                }
                (_, Some(v)) if !(v > 0.0) => return Err(err(format!("samples.scale must be positive, got {v}"))),
                _ => {}
            }
        }
        if let PriorSpec::Cosine { amplitude, axis } = c.prior {
            let form = PriorForm::Cosine { amplitude, axis };
            let g = QuadratureGrid::new(&c.manifold, &c.resolution).map_err(|e| err(e.to_string()))?;
            geobayes::prior::PriorDensity::from_form(&g, form).map_err(|e| err(format!("prior: {e}")))?;
        }
        let mut files: Vec<(&str, &Path)> = Vec::new();
        if let PriorSpec::GridFile { path } = &c.prior {
            files.push(("prior.path", path));
        }
        if let Some(WeightSpec::GridFile { path }) = &c.weight {
            files.push(("weight.path", path));
        }
        if let Some(p) = &c.points {
            files.push(("points", p));
        }
        for (field, p) in files {
            if !p.is_file() {
                return Err(err(format!("{field}: file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn map(&self) -> MapDescriptor {
        MapDescriptor::new(&self.config.manifold, self.config.map.clone()).expect("validated at load")
    }

    pub fn grid(&self) -> QuadratureGrid {
        QuadratureGrid::new(&self.config.manifold, &self.config.resolution).expect("validated at load")
    }
}
