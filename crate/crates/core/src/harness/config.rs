use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::presets;
use crate::adversary::{AttackStrategy, ChannelConfig};
use crate::calibration::CalibrationConfig;
use crate::countermeasures::CountermeasureStack;
use crate::detectors::SpadConfig;
use crate::endpoints::{AliceConfig, BobConfig};
use crate::postprocessing::Thresholds;

pub const MIN_SLOTS: u64 = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// A detector given by preset name or as a table of overrides on the
/// default detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectorSpec {
    Preset(String),
    Inline(SpadConfig),
}

impl DetectorSpec {
    pub fn resolve(&self) -> Result<SpadConfig, String> {
        match self {
            Self::Inline(c) => Ok(c.clone()),
            Self::Preset(name) => {
                presets::detector(name).ok_or_else(|| format!("unknown detector preset `{name}`"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostConfig {
    pub f_ec: f64,
    pub security_margin_bits: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        Self { f_ec: 1.1, security_margin_bits: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedAttack {
    #[serde(default)]
    pub name: Option<String>,
    pub attack: AttackStrategy,
}

impl NamedAttack {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.attack.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedStack {
    pub name: String,
    #[serde(default)]
    pub countermeasures: CountermeasureStack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default = "default_runs")]
    pub runs_per_cell: u32,
    pub attacks: Vec<NamedAttack>,
    pub stacks: Vec<NamedStack>,
}

fn default_runs() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_slots")]
    pub slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample_fraction")]
    pub sample_fraction: f64,
    #[serde(default)]
    pub alice: AliceConfig,
    #[serde(default)]
    pub bob: BobConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub attack: AttackStrategy,
    #[serde(default)]
    pub countermeasures: CountermeasureStack,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub postprocessing: PostConfig,
    #[serde(default)]
    pub audit: Option<AuditSpec>,
}

fn default_slots() -> u64 {
    100_000
}

fn default_sample_fraction() -> f64 {
    0.1
}

fn default_detectors() -> Vec<DetectorSpec> {
    vec![DetectorSpec::Preset("clavis2-like".into()); 2]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        toml_to_config(toml::Table::new()).expect("empty table uses defaults")
    }
}

impl ScenarioConfig {
    /// Parse a config document. A top-level `preset = "<name>"` key pulls in
    /// that preset first and overlays the rest of the document on it.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml_to_config(resolve_document(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&read(path)?)
    }

    /// Fails for seeds above `i64::MAX`, which a TOML integer cannot hold.
    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        if i64::try_from(self.seed).is_err() {
            return Err(ConfigError::Parse(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn resolved_detectors(&self) -> Result<Vec<SpadConfig>, Vec<String>> {
        let mut out = Vec::new();
        let mut errs = Vec::new();
        for (i, d) in self.detectors.iter().enumerate() {
            match d.resolve() {
                Ok(c) => out.push(c),
                Err(e) => errs.push(format!("detectors[{i}]: {e}")),
            }
        }
        if errs.is_empty() {
            Ok(out)
        } else {
            Err(errs)
        }
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.slots < MIN_SLOTS {
            v.push(format!("slots must be >= {MIN_SLOTS}, got {}", self.slots));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 0.5) {
            v.push(format!("sample_fraction must be in (0, 0.5], got {}", self.sample_fraction));
        }
        v.extend(self.alice.violations());
        v.extend(self.bob.violations());
        v.extend(self.channel.violations());
        match self.resolved_detectors() {
            Ok(dets) => {
                if dets.len() != self.bob.detector_count() {
                    v.push(format!(
                        "receiver needs {} detectors, got {}",
                        self.bob.detector_count(),
                        dets.len()
                    ));
                }
                for (i, d) in dets.iter().enumerate() {
                    v.extend(d.violations(&format!("detectors[{i}]")));
                }
            }
            Err(e) => v.extend(e),
        }
        v.extend(self.thresholds.violations());
        v.extend(self.countermeasures.violations());
        if let Some(c) = &self.calibration {
            v.extend(c.violations());
        }
        if !(self.postprocessing.f_ec >= 1.0) {
            v.push(format!("postprocessing.f_ec must be >= 1, got {}", self.postprocessing.f_ec));
        }
        if !(self.postprocessing.security_margin_bits >= 0.0) {
            v.push("postprocessing.security_margin_bits must be >= 0".into());
        }
        if let Some(a) = &self.audit {
            if a.runs_per_cell == 0 || a.attacks.is_empty() || a.stacks.is_empty() {
                v.push("audit needs runs_per_cell >= 1 and nonempty attacks and stacks".into());
            }
        }
        v
    }
}

fn read(path: &std::path::Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub(crate) fn toml_to_config(table: toml::Table) -> Result<ScenarioConfig, ConfigError> {
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
}

/// Parse `text` and expand `preset` references into one flat document.
pub fn resolve_document(text: &str) -> Result<toml::Table, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    expand_presets(table, 0)
}

fn expand_presets(mut table: toml::Table, depth: usize) -> Result<toml::Table, ConfigError> {
    let Some(preset) = table.remove("preset") else {
        return Ok(table);
    };
    let name =
        preset.as_str().ok_or_else(|| ConfigError::Parse("`preset` must be a string".into()))?.to_string();
    if depth > 8 {
        return Err(ConfigError::Parse("preset chain too deep".into()));
    }
    let base_text = presets::scenario_toml(&name).ok_or(ConfigError::UnknownPreset(name))?;
    let base: toml::Table = base_text.parse().expect("built-in presets parse");
    let mut base = expand_presets(base, depth + 1)?;
    merge(&mut base, table);
    Ok(base)
}

/// Overlay `top` on `base`; tables merge key by key, anything else replaces.
/// A table naming a different `kind` replaces wholesale, so fields of two
/// attack variants never mix.
pub fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t))
                if t.get("kind").is_none() || t.get("kind") == b.get("kind") =>
            {
                merge(b, t)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Set the value at a dotted path, e.g. `alice.mu`, parsing `raw` as a TOML
/// literal and falling back to a plain string.
pub fn set_path(table: &mut toml::Table, path: &str, raw: &str) -> Result<(), ConfigError> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ConfigError::Parse(format!("bad path `{path}`")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Parse(format!("`{p}` in `{path}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
