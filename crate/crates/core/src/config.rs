//! Flat key/value configuration covering every simulator parameter.
//!
//! The file is TOML with one top-level key per parameter, for example
//!
//! ```toml
//! fixture_stiffness = 3000.0
//! feedback_delay_ms = 50.0
//! perception_delay_vf_ms = 300.0
//! ```
//!
//! Missing keys keep their defaults; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::FeedbackConfig;
use crate::haptic_loop::LoopConfig;
use crate::operator::OperatorParams;
use crate::tissue::TissueParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: &'static str },
    #[error("unknown configuration key(s): {0}")]
    UnknownKeys(String),
    #[error("failed to parse configuration: {0}")]
    Parse(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub(crate) fn invalid(key: &'static str, reason: &'static str) -> Self {
        ConfigError::Invalid { key, reason }
    }
}

/// Trial protocol timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Unbroken fixture contact required before the beep, s.
    pub contact_hold_s: f64,
    pub timeout_s: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            contact_hold_s: 5.0,
            timeout_s: 60.0,
        }
    }
}

/// Batch-experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub fixture_depth_min: f64,
    pub fixture_depth_max: f64,
    /// How much deeper the fixture jumps in perturbation trials, m.
    pub perturbation_offset: f64,
    /// Delay used by exp3 unless overridden on the command line.
    pub exp3_delay_ms: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            fixture_depth_min: 0.103,
            fixture_depth_max: 0.143,
            perturbation_offset: 0.030,
            exp3_delay_ms: 50.0,
            repetitions: 6,
            seed: 1,
        }
    }
}

/// Interactive session settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub hand_workspace_min: f64,
    pub hand_workspace_max: f64,
    pub broadcast_hz: f64,
    /// Input silence after which a warning event is logged, s.
    pub input_stale_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            hand_workspace_min: 0.0,
            hand_workspace_max: 0.07,
            broadcast_hz: 60.0,
            input_stale_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    #[serde(flatten)]
    pub tissue: TissueParams,
    #[serde(flatten)]
    pub loop_config: LoopConfig,
    #[serde(flatten)]
    pub feedback: FeedbackConfig,
    #[serde(flatten)]
    pub operator: OperatorParams,
    #[serde(flatten)]
    pub protocol: ProtocolConfig,
    #[serde(flatten)]
    pub harness: HarnessConfig,
    #[serde(flatten)]
    pub session: SessionConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let known = Self::known_keys();
        let unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(*k))
            .collect();
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown.join(", ")));
        }
        let config: SimConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    fn known_keys() -> BTreeSet<String> {
        match toml::Table::try_from(SimConfig::default()) {
            Ok(table) => table.keys().cloned().collect(),
            Err(_) => BTreeSet::new(),
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tissue.validate()?;
        self.loop_config.validate()?;
        self.feedback.validate()?;
        self.operator.validate()?;
        let p = &self.protocol;
        if !(p.contact_hold_s.is_finite() && p.contact_hold_s > 0.0) {
            return Err(ConfigError::invalid("contact_hold_s", "must be strictly positive"));
        }
        if !(p.timeout_s.is_finite() && p.timeout_s > p.contact_hold_s) {
            return Err(ConfigError::invalid("timeout_s", "must exceed contact_hold_s"));
        }
        let h = &self.harness;
        if !(h.fixture_depth_min > self.tissue.surface_rest && h.fixture_depth_max >= h.fixture_depth_min) {
            return Err(ConfigError::invalid(
                "fixture_depth_min",
                "fixture range must lie deeper than surface_rest and be non-empty",
            ));
        }
        if !(h.perturbation_offset.is_finite() && h.perturbation_offset > 0.0) {
            return Err(ConfigError::invalid("perturbation_offset", "must be strictly positive"));
        }
        if !(h.exp3_delay_ms.is_finite() && h.exp3_delay_ms >= 0.0) {
            return Err(ConfigError::invalid("exp3_delay_ms", "must be non-negative"));
        }
        if h.repetitions == 0 {
            return Err(ConfigError::invalid("repetitions", "must be at least 1"));
        }
        let s = &self.session;
        if !(s.hand_workspace_max > s.hand_workspace_min) {
            return Err(ConfigError::invalid(
                "hand_workspace_max",
                "must exceed hand_workspace_min",
            ));
        }
        if !(s.broadcast_hz > 0.0 && s.broadcast_hz <= f64::from(self.loop_config.rate_hz)) {
            return Err(ConfigError::invalid("broadcast_hz", "must be in (0, rate_hz]"));
        }
        if !(s.input_stale_s.is_finite() && s.input_stale_s > 0.0) {
            return Err(ConfigError::invalid("input_stale_s", "must be strictly positive"));
        }
        Ok(())
    }
}
