//! Study configuration: JSON object with defaults, dotted-key overrides and a stable digest.

use crate::domain::GeometrySpec;
use crate::error::{Error, Result};
use crate::spaces::FieldFamily;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// `R`.
    pub base_length: f64,
    /// `L`, radius of the disk `Omega = B_L`.
    pub outer_radius: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { base_length: 1.0, outer_radius: 9.0 }
    }
}

/// Time steps for mesh size `h`: `ceil(T / (dt_per_h h))`, rounded up to a multiple of 4
/// so `T/4`, `T/2` and `3T/4` are nodes, then clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimePolicy {
    pub dt_per_h: f64,
    pub min_steps: usize,
    pub max_steps: usize,
    /// 1 for implicit Euler, 1/2 for Crank-Nicolson.
    pub theta: f64,
}

impl Default for TimePolicy {
    fn default() -> Self {
        Self { dt_per_h: 0.05, min_steps: 16, max_steps: 200, theta: 1.0 }
    }
}

impl TimePolicy {
    pub fn steps(&self, horizon: f64, h: f64) -> usize {
        let raw = (horizon / (self.dt_per_h * h)).ceil() as usize;
        let rounded = raw.div_ceil(4) * 4;
        rounded.clamp(self.min_steps, self.max_steps - self.max_steps % 4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightCheckConfig {
    pub epsilons: Vec<f64>,
    /// Random points per ball for the identity residuals.
    pub points: usize,
}

impl Default for WeightCheckConfig {
    fn default() -> Self {
        Self { epsilons: vec![0.25, 0.125, 0.0625, 0.03125, 0.015625], points: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Regularization radius; `null` solves with `|x|^alpha`.
    pub epsilon: Option<f64>,
    pub h: f64,
    pub family: FieldFamily,
    pub backward: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { epsilon: None, h: 0.5, family: FieldFamily::UniformBumps, backward: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproximationConfig {
    /// Regularization levels `k`, `eps = 1/k`, increasing.
    pub k_levels: Vec<u32>,
    /// Bulk mesh size; the core is graded to `1/(4k)`.
    pub h: f64,
    pub family: FieldFamily,
    pub samples: usize,
}

impl Default for ApproximationConfig {
    fn default() -> Self {
        Self { k_levels: vec![8, 16, 32, 64], h: 0.5, family: FieldFamily::AnnulusBumps, samples: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub families: Vec<FieldFamily>,
    pub samples: usize,
    /// A sample with `rhs` below this and `lhs` above `lhs_floor` is a violation candidate.
    pub rhs_floor: f64,
    pub lhs_floor: f64,
    /// Negative-path fixture: append one record with `lhs = 1`, `rhs = 0` per mesh level.
    pub inject_violation: bool,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self {
            families: FieldFamily::OBSERVABILITY.to_vec(),
            samples: 50,
            rhs_floor: 1e-30,
            lhs_floor: 1e-10,
            inject_violation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanSweepConfig {
    pub samples: usize,
    pub family: FieldFamily,
    pub s: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Held fixed while the other slope is swept.
    pub default_gamma: f64,
    pub default_lambda: f64,
    /// Regularization radius of the solutions used for the regularized inequality.
    pub epsilon: f64,
    /// `k` levels of the remainder-trend monitor, `eps = 1/k`.
    pub remainder_k_levels: Vec<u32>,
    pub eta_bar_exponent: u32,
    /// Power of `s` on the two remainders of the regularized inequality (2 or 1).
    pub remainder_power: u32,
    /// Data scaling factor of the invariance check.
    pub scaling: f64,
}

impl Default for CarlemanSweepConfig {
    fn default() -> Self {
        Self {
            samples: 10,
            family: FieldFamily::UniformBumps,
            s: vec![1.0, 2.0, 4.0, 8.0, 16.0, 20.0],
            gamma: vec![1.0, 4.0, 8.0],
            lambda: vec![1.0, 4.0, 8.0],
            default_gamma: 4.0,
            default_lambda: 4.0,
            epsilon: 0.125,
            remainder_k_levels: vec![8, 16, 32],
            eta_bar_exponent: 8,
            remainder_power: 2,
            scaling: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    /// Degeneracy exponent, in `(0, 2)`.
    pub alpha: f64,
    /// Final time `T`.
    pub horizon: f64,
    /// Mesh sizes `h`, decreasing.
    pub mesh_levels: Vec<f64>,
    pub time: TimePolicy,
    pub weights: WeightCheckConfig,
    pub solve: SolveConfig,
    pub approximation: ApproximationConfig,
    pub observability: ObservabilityConfig,
    pub carleman: CarlemanSweepConfig,
    pub seed: u64,
    /// Output directory; not part of the digest.
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            alpha: 1.0,
            horizon: 1.0,
            mesh_levels: vec![0.5, 0.35, 0.25],
            time: TimePolicy::default(),
            weights: WeightCheckConfig::default(),
            solve: SolveConfig::default(),
            approximation: ApproximationConfig::default(),
            observability: ObservabilityConfig::default(),
            carleman: CarlemanSweepConfig::default(),
            seed: 0,
            output: PathBuf::from("degenlab-out"),
        }
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl ExperimentConfig {
    pub fn geometry_spec(&self) -> GeometrySpec {
        GeometrySpec { base_length: self.geometry.base_length, outer_radius: self.geometry.outer_radius, dim: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if !(g.base_length > 0.0 && g.base_length.is_finite()) {
            return Err(Error::config("geometry.base_length", "must be positive"));
        }
        if !(g.outer_radius > 8.0 * g.base_length) {
            return Err(Error::config(
                "geometry.outer_radius",
                format!("need L > 8R, got L = {} with R = {}", g.outer_radius, g.base_length),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::config("alpha", format!("must lie in the open interval (0, 2), got {}", self.alpha)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon", "must be positive"));
        }
        if self.mesh_levels.is_empty() || self.mesh_levels.iter().any(|&h| !(h > 0.0 && h <= g.base_length)) {
            return Err(Error::config("mesh_levels", format!("need at least one h in (0, R], got {:?}", self.mesh_levels)));
        }
        if !strictly_decreasing(&self.mesh_levels) {
            return Err(Error::config("mesh_levels", "must be strictly decreasing"));
        }
        let t = &self.time;
        if !(t.dt_per_h > 0.0) {
            return Err(Error::config("time.dt_per_h", "must be positive"));
        }
        if t.min_steps < 4 || t.max_steps < t.min_steps {
            return Err(Error::config("time.min_steps", "need 4 <= min_steps <= max_steps"));
        }
        if !(0.5..=1.0).contains(&t.theta) {
            return Err(Error::config("time.theta", "must lie in [1/2, 1]"));
        }
        if self.weights.epsilons.iter().any(|&e| !(e > 0.0 && e < 0.5 * g.base_length)) {
            return Err(Error::config("weights.epsilons", "each epsilon must lie in (0, R/2)"));
        }
        if let Some(e) = self.solve.epsilon {
            if !(e > 0.0 && e < 0.5 * g.base_length) {
                return Err(Error::config("solve.epsilon", "must lie in (0, R/2)"));
            }
        }
        if !(self.solve.h > 0.0 && self.solve.h <= g.base_length) {
            return Err(Error::config("solve.h", "must lie in (0, R]"));
        }
        let a = &self.approximation;
        if a.k_levels.is_empty() || a.k_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("approximation.k_levels", "must be non-empty and strictly increasing"));
        }
        if a.k_levels.iter().any(|&k| 1.0 / (k as f64) >= 0.5 * g.base_length) {
            return Err(Error::config("approximation.k_levels", "need 1/k < R/2"));
        }
        if !(a.h > 0.0 && a.h <= g.base_length) {
            return Err(Error::config("approximation.h", "must lie in (0, R]"));
        }
        if a.samples == 0 {
            return Err(Error::config("approximation.samples", "must be positive"));
        }
        let o = &self.observability;
        if o.families.is_empty() {
            return Err(Error::config("observability.families", "must not be empty"));
        }
        if !(o.rhs_floor >= 0.0 && o.lhs_floor >= 0.0) {
            return Err(Error::config("observability.rhs_floor", "thresholds must be nonnegative"));
        }
        let c = &self.carleman;
        for (key, list) in [("carleman.s", &c.s), ("carleman.gamma", &c.gamma), ("carleman.lambda", &c.lambda)] {
            if list.is_empty() || list.iter().any(|&v| !(v >= 1.0 && v.is_finite())) {
                return Err(Error::config(key, "values must be finite and >= 1"));
            }
        }
        if !(c.default_gamma >= 1.0 && c.default_lambda >= 1.0) {
            return Err(Error::config("carleman.default_gamma", "defaults must be >= 1"));
        }
        if !(c.epsilon > 0.0 && c.epsilon < 0.5 * g.base_length) {
            return Err(Error::config("carleman.epsilon", "must lie in (0, R/2)"));
        }
        if c.remainder_k_levels.iter().any(|&k| 1.0 / (k as f64) >= 0.5 * g.base_length) {
            return Err(Error::config("carleman.remainder_k_levels", "need 1/k < R/2"));
        }
        if !(c.remainder_power == 1 || c.remainder_power == 2) {
            return Err(Error::config("carleman.remainder_power", "must be 1 or 2"));
        }
        if !(c.scaling > 0.0 && c.scaling.is_finite() && c.scaling != 1.0) {
            return Err(Error::config("carleman.scaling", "must be positive and different from 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON (sorted keys) without `output`.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output");
        }
        let text = serde_json::to_string(&v).expect("value serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Every leaf key in dotted form with its default value as JSON text.
pub fn config_keys() -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(ExperimentConfig::default()).expect("config serializes"), &mut out);
    out
}

/// Replace the value at a dotted key. The key must exist in the default configuration;
/// the value is parsed as JSON and falls back to a plain string.
fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let defaults = serde_json::to_value(ExperimentConfig::default()).expect("config serializes");
    let mut probe = &defaults;
    for part in key.split('.') {
        probe = probe
            .get(part)
            .ok_or_else(|| Error::config(key, "unknown configuration key (see --help for the list)"))?;
    }
    if probe.is_object() {
        return Err(Error::config(key, "is a section; set one of its fields instead"));
    }
    let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    for part in key.split('.') {
        let map = slot.as_object_mut().ok_or_else(|| Error::config(key, "parent is not an object"))?;
        slot = map.entry(part.to_string()).or_insert(Value::Object(Default::default()));
    }
    *slot = value;
    Ok(())
}

/// Build a configuration from an optional JSON file and `key=value` overrides applied after it.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::Json { path: p.into(), source: e })?;
            if !v.is_object() {
                return Err(Error::config("<root>", format!("{} must contain a JSON object", p.display())));
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.as_str(), "override must have the form key=value"))?;
        apply_override(&mut root, key.trim(), raw.trim())?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(root).map_err(|e| Error::config("<root>", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
