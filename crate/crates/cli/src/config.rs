//! Run configuration: one JSON file, optionally overridden from the command
//! line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tamed_core::catalog::{catalog_build, CatalogChart, GroundTruth, Params};
use tamed_core::expr::{parse_chart, ChartSpec};
use tamed_core::invariants::DeltaModel;
use tamed_core::mesh::DEFAULT_EPSILON_CRIT;
use tamed_core::volumetrics::{DEFAULT_CURVE_POINTS, VERDICT_TOL};
use tamed_core::chart::require_bounded;
use tamed_core::{Ambient, Chart, Exec};

/// What to study.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ImmersionSource {
    /// A catalog entry with its parameters.
    Catalog {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    /// Chart source text.
    Chart(String),
    /// Path to a chart source file, relative to the config file.
    ChartFile(PathBuf),
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_CRIT
}

fn default_tolerance() -> f64 {
    VERDICT_TOL
}

fn default_samples() -> usize {
    200
}

fn default_points() -> usize {
    DEFAULT_CURVE_POINTS
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub immersion: Option<ImmersionSource>,
    /// Expected ambient curvature; must agree with the immersion.
    pub kappa: Option<f64>,
    /// Explicit ambient pole; defaults to the image of the chart basepoint.
    pub pole: Option<Vec<f64>>,
    pub resolution: Option<Vec<usize>>,
    pub truncation: Option<f64>,
    pub exhaustion_radii: Option<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon_crit: f64,
    #[serde(default)]
    pub delta: DeltaModel,
    #[serde(default)]
    pub exec: Exec,
    pub threads: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub curvature_samples: usize,
    #[serde(default = "default_points")]
    pub volume_points: usize,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub dump_mesh: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            immersion: None,
            kappa: None,
            pole: None,
            resolution: None,
            truncation: None,
            exhaustion_radii: None,
            epsilon_crit: DEFAULT_EPSILON_CRIT,
            delta: DeltaModel::Zero,
            exec: Exec::default(),
            threads: None,
            tolerance: VERDICT_TOL,
            seed: 0,
            curvature_samples: 200,
            volume_points: DEFAULT_CURVE_POINTS,
            out: None,
            dump_mesh: false,
        }
    }
}

/// Invalid configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<tamed_core::Error> for ConfigError {
    fn from(e: tamed_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

/// Read a config file. Relative chart paths are resolved against its
/// directory.
pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if let Some(ImmersionSource::ChartFile(p)) = &mut cfg.immersion {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.epsilon_crit > 0.0) {
            return Err(ConfigError("epsilon_crit must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(ConfigError("tolerance must be non-negative".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError("threads must be at least 1".into()));
        }
        if let Some(t) = self.truncation {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError(format!("truncation must be positive, got {t}")));
            }
        }
        if let DeltaModel::Inverse { d0, t0 } = self.delta {
            if !(d0 >= 0.0 && t0 > 0.0) {
                return Err(ConfigError("delta model needs d0 >= 0 and t0 > 0".into()));
            }
        }
        if self.volume_points < 2 {
            return Err(ConfigError("volume_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("tamed-out"))
    }
}

pub enum ChartKind {
    Catalog(CatalogChart),
    Parsed(ChartSpec),
}

/// The immersion a run operates on.
pub struct Immersion {
    pub kind: ChartKind,
    pub truth: Option<GroundTruth>,
    pub ambient: Ambient,
    pub resolution: Vec<usize>,
}

impl Immersion {
    pub fn chart(&self) -> &dyn Chart {
        match &self.kind {
            ChartKind::Catalog(c) => c,
            ChartKind::Parsed(c) => c,
        }
    }
}

fn default_resolution(m: usize) -> Vec<usize> {
    let per_axis = match m {
        1 => 512,
        2 => 128,
        3 => 32,
        4 => 12,
        _ => 7,
    };
    vec![per_axis; m]
}

/// Build the immersion, ambient and resolution described by `cfg`.
pub fn resolve(cfg: &RunConfig) -> Result<Immersion, ConfigError> {
    let source = cfg
        .immersion
        .as_ref()
        .ok_or_else(|| ConfigError("no immersion given; use --catalog, --chart or a config file".into()))?;
    let (kind, truth) = match source {
        ImmersionSource::Catalog { name, params } => {
            let mut params: Params = params.clone();
            if let Some(t) = cfg.truncation {
                params.insert("truncation".into(), t);
            }
            let (chart, truth) = catalog_build(name, &params)?;
            (ChartKind::Catalog(chart), Some(truth))
        }
        ImmersionSource::Chart(src) => (ChartKind::Parsed(parse_source(src, cfg)?), None),
        ImmersionSource::ChartFile(path) => {
            let src = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read chart {}: {e}", path.display())))?;
            (ChartKind::Parsed(parse_source(&src, cfg)?), None)
        }
    };
    let chart: &dyn Chart = match &kind {
        ChartKind::Catalog(c) => c,
        ChartKind::Parsed(c) => c,
    };
    let space = chart.space();
    if let Some(k) = cfg.kappa {
        if k != space.kappa {
            return Err(ConfigError(format!(
                "config kappa = {k} but the immersion lives in curvature {}",
                space.kappa
            )));
        }
    }
    let ambient = match &cfg.pole {
        Some(p) => Ambient::new(space, p.clone())?,
        None => Ambient::for_chart(chart)?,
    };
    let resolution = match (&cfg.resolution, &kind) {
        (Some(r), _) => r.clone(),
        (None, ChartKind::Catalog(c)) => c.default_resolution(),
        (None, ChartKind::Parsed(c)) => default_resolution(c.m),
    };
    if resolution.len() != chart.dim() {
        return Err(ConfigError(format!(
            "resolution has {} entries but the chart has dimension {}",
            resolution.len(),
            chart.dim()
        )));
    }
    if let Some(&n) = resolution.iter().find(|&&n| n < 3) {
        return Err(ConfigError(format!("resolution must be at least 3 per axis, got {n}")));
    }
    Ok(Immersion {
        kind,
        truth,
        ambient,
        resolution,
    })
}

fn parse_source(src: &str, cfg: &RunConfig) -> Result<ChartSpec, ConfigError> {
    let mut spec = parse_chart(src)?;
    if let Some(t) = cfg.truncation {
        spec = spec.with_truncation(t)?;
    }
    require_bounded(&spec)?;
    if spec.kappa < 0.0 {
        spec.validate_hyperboloid()?;
    }
    Ok(spec)
}
