//! Run configuration: a problem spec plus command-specific keys.

use std::fs;
use std::path::Path;

use hybrid_nonlocal::{make_domain, ProblemSpec};
use serde::Deserialize;
use serde_json::Value;

/// Keys that belong to the commands rather than to the problem spec.
const COMMAND_KEYS: [&str; 4] = ["samples", "ladder", "grid", "max_iterations"];

pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub alpha: Vec<f64>,
    pub num_nodes: Vec<usize>,
    pub mesh_intervals: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub samples: Option<usize>,
    pub ladder: Option<Vec<usize>>,
    pub grid: Option<GridConfig>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn take<T: for<'de> Deserialize<'de>>(
    obj: &mut serde_json::Map<String, Value>,
    key: &str,
) -> Result<Option<T>, ConfigError> {
    match obj.remove(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| ConfigError(format!("{key}: {e}"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, seed)
    }

    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid JSON: {e}")))?;
        let Value::Object(mut obj) = value else {
            return Err(ConfigError("config must be a JSON object".into()));
        };
        let samples: Option<usize> = take(&mut obj, COMMAND_KEYS[0])?;
        let ladder: Option<Vec<usize>> = take(&mut obj, COMMAND_KEYS[1])?;
        let grid: Option<GridConfig> = take(&mut obj, COMMAND_KEYS[2])?;
        let max_iterations: Option<usize> = take(&mut obj, COMMAND_KEYS[3])?;
        let mut spec: ProblemSpec =
            serde_json::from_value(Value::Object(obj)).map_err(|e| ConfigError(e.to_string()))?;
        if let Some(seed) = seed {
            spec.seed = seed;
        }
        if samples == Some(0) {
            return Err(ConfigError("samples must be >= 1: got 0".into()));
        }
        if max_iterations == Some(0) {
            return Err(ConfigError("max_iterations must be >= 1: got 0".into()));
        }
        if let Some(g) = &grid {
            if g.alpha.is_empty() || g.num_nodes.is_empty() || g.mesh_intervals.is_empty() {
                return Err(ConfigError(
                    "grid: every axis needs at least one value".into(),
                ));
            }
        }
        Ok(Self {
            spec,
            samples,
            ladder,
            grid,
            max_iterations,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(DEFAULT_SAMPLES)
    }

    /// The problem at every grid point, or the configured problem without a grid. The
    /// forcing is replaced by zero when the node count differs from the config.
    pub fn grid_specs(&self) -> Result<Vec<ProblemSpec>, ConfigError> {
        let Some(g) = &self.grid else {
            return Ok(vec![self.spec.clone()]);
        };
        let mut out = Vec::new();
        for &alpha in &g.alpha {
            for &n in &g.num_nodes {
                for &m in &g.mesh_intervals {
                    let domain =
                        make_domain(alpha, n, m).map_err(|e| ConfigError(format!("grid: {e}")))?;
                    let mut spec = self.spec.clone();
                    if n != self.spec.domain.num_nodes() {
                        spec.forcing = hybrid_nonlocal::Forcing::zero(n);
                    }
                    spec.domain = domain;
                    out.push(spec);
                }
            }
        }
        Ok(out)
    }

    /// The mesh ladder, checked to be dyadic (each entry twice the previous).
    pub fn dyadic_ladder(&self) -> Result<Vec<usize>, ConfigError> {
        let ladder = self
            .ladder
            .clone()
            .ok_or_else(|| ConfigError("ladder is required for this command".into()))?;
        if ladder.is_empty() || ladder.contains(&0) {
            return Err(ConfigError("ladder must list positive mesh sizes".into()));
        }
        if ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(ConfigError("ladder must be nested (dyadic)".into()));
        }
        Ok(ladder)
    }
}
