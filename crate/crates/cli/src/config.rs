use std::fmt;
use std::path::Path;

use mabnet_core::montecarlo::McConfig;
use mabnet_core::params::{db_to_linear, SpectrumPartition};
use mabnet_core::{
    CacheConfig, CaseCoupling, DistanceMode, Error as CoreError, Network, SystemConfig, SystemParams,
};
use serde::{Deserialize, Serialize};

/// Everything a run reads from its config file. Every table is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub cache: CacheConfig,
    pub partition: PartitionConfig,
    pub sweep: SweepConfig,
    pub mc: McConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// Share of the band used by access links.
    pub eta: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { eta: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Eta,
    CacheSize,
    Gamma0Db,
    LambdaM,
    ZipfExponent,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Eta => "eta",
            Axis::CacheSize => "cache_size",
            Axis::Gamma0Db => "gamma0_db",
            Axis::LambdaM => "lambda_m",
            Axis::ZipfExponent => "zipf_exponent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engines {
    #[default]
    Analytical,
    Montecarlo,
    Both,
}

impl Engines {
    pub fn analytical(self) -> bool {
        matches!(self, Engines::Analytical | Engines::Both)
    }

    pub fn montecarlo(self) -> bool {
        matches!(self, Engines::Montecarlo | Engines::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Swept parameter; without one the run evaluates a single point.
    pub axis: Option<Axis>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    /// Explicit grid, used instead of start/stop/points.
    pub values: Option<Vec<f64>>,
    pub engines: Engines,
    /// SINR threshold of the rate requirement, dB.
    pub gamma0_db: f64,
    pub distance_mode: DistanceMode,
    pub coupling: CaseCoupling,
    /// Results file name inside the output directory.
    pub output: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: None,
            start: None,
            stop: None,
            points: None,
            values: None,
            engines: Engines::default(),
            gamma0_db: 10.0,
            distance_mode: DistanceMode::default(),
            coupling: CaseCoupling::default(),
            output: "results.csv".to_string(),
        }
    }
}

/// A configuration problem, optionally anchored to a line of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": {key}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// One grid point of the sweep, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    /// Raw axis value as written in the config (None without a sweep).
    pub axis_value: Option<f64>,
    pub axis_linear: Option<f64>,
    pub net: Network,
    pub eta: f64,
    pub gamma0_db: f64,
    pub gamma0: f64,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub points: Vec<Point>,
}

pub fn load(path: &Path) -> Result<Resolved, ConfigError> {
    let file = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: file.clone(),
        line: None,
        key: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse(&src, &file)
}

pub fn parse(src: &str, file: &str) -> Result<Resolved, ConfigError> {
    let config: RunConfig = toml::from_str(src).map_err(|e| ConfigError {
        file: file.to_string(),
        line: e.span().map(|s| line_of_offset(src, s.start)),
        key: None,
        message: e.message().trim().to_string(),
    })?;
    resolve(config).map_err(|(key, message)| ConfigError {
        file: file.to_string(),
        line: locate(src, &key),
        key: Some(key),
        message,
    })
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the entry for a dotted key such as `partition.eta`, falling back
/// to the header of its table.
pub fn locate(src: &str, dotted: &str) -> Option<usize> {
    let mut table = String::new();
    let mut header_line = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            table = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if dotted.starts_with(&format!("{table}.")) && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else {
            continue;
        };
        let key: String = key
            .split('.')
            .map(|k| k.trim().trim_matches('"'))
            .collect::<Vec<_>>()
            .join(".");
        let full = if table.is_empty() {
            key
        } else {
            format!("{table}.{key}")
        };
        if full == dotted || dotted.starts_with(&format!("{full}.")) {
            return Some(i + 1);
        }
    }
    header_line
}

type Invalid = (String, String);

fn core_field(prefix: &str, e: CoreError) -> Invalid {
    match e {
        CoreError::InvalidParameter { field, reason } => {
            let qualified = ["system.", "cache.", "partition.", "sweep.", "mc."]
                .iter()
                .any(|t| field.starts_with(t));
            if qualified {
                (field.to_string(), reason)
            } else {
                (format!("{prefix}.{field}"), reason)
            }
        }
        CoreError::NonPositiveTxPower { .. } => ("cache.cache_size".to_string(), e.to_string()),
        other => (prefix.to_string(), other.to_string()),
    }
}

fn grid(sweep: &SweepConfig) -> Result<Vec<f64>, Invalid> {
    if let Some(values) = &sweep.values {
        if values.is_empty() {
            return Err(("sweep.values".into(), "grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(("sweep.values".into(), format!("non-finite grid value {v}")));
        }
        return Ok(values.clone());
    }
    let (Some(start), Some(stop)) = (sweep.start, sweep.stop) else {
        return Err((
            "sweep.axis".into(),
            "needs either `values` or `start` and `stop`".into(),
        ));
    };
    if !start.is_finite() || !stop.is_finite() {
        return Err(("sweep.start".into(), "start and stop must be finite".into()));
    }
    let points = sweep.points.unwrap_or(if start == stop { 1 } else { 11 });
    match points {
        0 => Err(("sweep.points".into(), "grid is empty".into())),
        1 if start != stop => Err(("sweep.points".into(), "one point needs start == stop".into())),
        1 => Ok(vec![start]),
        n => Ok((0..n)
            .map(|i| {
                if i == n - 1 {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (n - 1) as f64
                }
            })
            .collect()),
    }
}

fn grid_key(sweep: &SweepConfig) -> String {
    if sweep.values.is_some() {
        "sweep.values"
    } else {
        "sweep.start"
    }
    .to_string()
}

/// Validate the whole config and expand the sweep into points.
pub fn resolve(config: RunConfig) -> Result<Resolved, Invalid> {
    let sys = config
        .system
        .clone()
        .validate()
        .map_err(|e| core_field("system", e))?;
    let cache = config
        .cache
        .clone()
        .validate()
        .map_err(|e| core_field("cache", e))?;
    let base = Network::new(sys.clone(), cache.clone()).map_err(|e| core_field("cache", e))?;
    SpectrumPartition::new(config.partition.eta).map_err(|e| core_field("partition", e))?;
    config.mc.validate().map_err(|e| core_field("mc", e))?;
    let sweep = &config.sweep;
    if !sweep.gamma0_db.is_finite() {
        return Err(("sweep.gamma0_db".into(), "must be finite".into()));
    }
    if sweep.output.is_empty() || sweep.output.contains(['/', '\\']) {
        return Err(("sweep.output".into(), "must be a plain file name".into()));
    }

    let single = |net: Network, eta: f64, g_db: f64, axis: Option<(f64, f64)>| Point {
        axis_value: axis.map(|a| a.0),
        axis_linear: axis.map(|a| a.1),
        net,
        eta,
        gamma0_db: g_db,
        gamma0: db_to_linear(g_db),
    };
    let eta = config.partition.eta;
    let g_db = sweep.gamma0_db;
    let Some(axis) = sweep.axis else {
        return Ok(Resolved {
            points: vec![single(base, eta, g_db, None)],
            config,
        });
    };
    let key = grid_key(sweep);
    let bad = |v: f64, e: CoreError| (key.clone(), format!("grid value {v}: {}", e));
    let mut points = Vec::new();
    for v in grid(sweep)? {
        let point = match axis {
            Axis::Eta => {
                SpectrumPartition::new(v).map_err(|e| bad(v, e))?;
                single(base.clone(), v, g_db, Some((v, v)))
            }
            Axis::CacheSize => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err((
                        key,
                        format!("grid value {v}: cache sizes are non-negative integers"),
                    ));
                }
                let net = with_cache(
                    &sys,
                    CacheConfig {
                        cache_size: v as u64,
                        ..cache.config().clone()
                    },
                )
                .map_err(|e| bad(v, e))?;
                single(net, eta, g_db, Some((v, v)))
            }
            Axis::Gamma0Db => single(base.clone(), eta, v, Some((v, db_to_linear(v)))),
            Axis::LambdaM => {
                let s = SystemConfig {
                    lambda_m: v,
                    ..sys.config().clone()
                }
                .validate()
                .map_err(|e| bad(v, e))?;
                let net = Network::new(s, cache.clone()).map_err(|e| bad(v, e))?;
                single(net, eta, g_db, Some((v, v)))
            }
            Axis::ZipfExponent => {
                let net = with_cache(
                    &sys,
                    CacheConfig {
                        zipf_exponent: v,
                        ..cache.config().clone()
                    },
                )
                .map_err(|e| bad(v, e))?;
                single(net, eta, g_db, Some((v, v)))
            }
        };
        points.push(point);
    }
    Ok(Resolved { config, points })
}

fn with_cache(sys: &SystemParams, cfg: CacheConfig) -> Result<Network, CoreError> {
    Network::new(sys.clone(), cfg.validate()?)
}

/// The config with every default written out.
pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}
