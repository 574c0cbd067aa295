//! Routing of the environment force into the four display modalities and the
//! fingertip actuator model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::delay::{delay_ticks, DelayLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    /// Full haptic feedback through the handle actuators.
    #[serde(rename = "HF")]
    Haptic,
    /// Force shown as a horizontal bar.
    #[serde(rename = "VF")]
    Visual,
    /// Cutaneous stress on the fingers holding the handle.
    #[serde(rename = "CF")]
    Cutaneous,
    /// Cutaneous stress on the other hand.
    #[serde(rename = "CCF")]
    ContralateralCutaneous,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Haptic,
        Modality::Visual,
        Modality::Cutaneous,
        Modality::ContralateralCutaneous,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Modality::Haptic => "HF",
            Modality::Visual => "VF",
            Modality::Cutaneous => "CF",
            Modality::ContralateralCutaneous => "CCF",
        }
    }

    pub fn is_cutaneous(self) -> bool {
        matches!(self, Modality::Cutaneous | Modality::ContralateralCutaneous)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HF" => Ok(Modality::Haptic),
            "VF" => Ok(Modality::Visual),
            "CF" => Ok(Modality::Cutaneous),
            "CCF" => Ok(Modality::ContralateralCutaneous),
            other => Err(format!("unknown modality `{other}` (expected HF, VF, CF or CCF)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Dominant,
    Contralateral,
}

impl Hand {
    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Dominant => "dominant",
            Hand::Contralateral => "contralateral",
        }
    }
}

impl FromStr for Hand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dominant" => Ok(Hand::Dominant),
            "contralateral" => Ok(Hand::Contralateral),
            other => Err(format!("unknown hand `{other}`")),
        }
    }
}

/// What the displays receive on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackCommand {
    /// Force on the handle, N. Nonzero only under HF.
    pub kinesthetic_force: f64,
    /// Normal stress on the index pad, N. Carries forces along -z.
    pub index_stress: f64,
    /// Normal stress on the thumb pad, N. Carries forces along +z.
    pub thumb_stress: f64,
    /// Bar fill in [0, 1].
    pub visual_bar: f64,
    /// Hand wearing the active cutaneous devices; `None` outside CF/CCF.
    pub target_hand: Option<Hand>,
}

impl FeedbackCommand {
    /// Magnitude shown on whichever channel is active.
    pub fn cutaneous_magnitude(&self) -> f64 {
        self.index_stress + self.thumb_stress
    }
}

/// Display-side parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    /// Force that fills the visual bar, N.
    pub bar_full_scale: f64,
    pub actuator_delay_ms: f64,
    pub actuator_time_constant_ms: f64,
    pub actuator_max_force: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            bar_full_scale: 3.5,
            actuator_delay_ms: 45.0,
            actuator_time_constant_ms: 10.0,
            actuator_max_force: 5.0,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.bar_full_scale.is_finite() && self.bar_full_scale > 0.0) {
            return Err(ConfigError::invalid("bar_full_scale", "must be strictly positive"));
        }
        if !(self.actuator_delay_ms.is_finite() && self.actuator_delay_ms >= 0.0) {
            return Err(ConfigError::invalid("actuator_delay_ms", "must be non-negative"));
        }
        if !(self.actuator_time_constant_ms.is_finite() && self.actuator_time_constant_ms > 0.0) {
            return Err(ConfigError::invalid(
                "actuator_time_constant_ms",
                "must be strictly positive",
            ));
        }
        if !(self.actuator_max_force.is_finite() && self.actuator_max_force > 0.0) {
            return Err(ConfigError::invalid("actuator_max_force", "must be strictly positive"));
        }
        Ok(())
    }
}

/// Maps the total environment force onto the modality's display channel.
pub fn route_force(force: f64, modality: Modality, bar_full_scale: f64) -> FeedbackCommand {
    match modality {
        Modality::Haptic => FeedbackCommand {
            kinesthetic_force: force,
            ..Default::default()
        },
        Modality::Visual => FeedbackCommand {
            visual_bar: (force.abs() / bar_full_scale).min(1.0),
            ..Default::default()
        },
        Modality::Cutaneous | Modality::ContralateralCutaneous => {
            let target_hand = Some(if modality == Modality::Cutaneous {
                Hand::Dominant
            } else {
                Hand::Contralateral
            });
            if force < 0.0 {
                FeedbackCommand {
                    index_stress: -force,
                    target_hand,
                    ..Default::default()
                }
            } else {
                FeedbackCommand {
                    thumb_stress: force,
                    target_hand,
                    ..Default::default()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ActuatorChannel {
    transport: DelayLine,
    output: f64,
}

impl ActuatorChannel {
    fn step(&mut self, input: f64, alpha: f64, max_force: f64) -> f64 {
        let delayed = self.transport.push(input.clamp(0.0, max_force));
        let out = self.output;
        self.output += alpha * (delayed - self.output);
        out
    }
}

/// Fingertip device: pure transport delay, first-order lag, saturation.
/// One channel per finger.
#[derive(Debug, Clone)]
pub struct CutaneousActuator {
    index: ActuatorChannel,
    thumb: ActuatorChannel,
    alpha: f64,
    max_force: f64,
}

/// Stresses actually delivered to the fingers, N.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AppliedStress {
    pub index: f64,
    pub thumb: f64,
}

impl CutaneousActuator {
    pub fn new(config: &FeedbackConfig, rate_hz: u32) -> Self {
        let dt = 1.0 / f64::from(rate_hz);
        let ticks = delay_ticks(config.actuator_delay_ms, rate_hz);
        let channel = ActuatorChannel {
            transport: DelayLine::new(ticks),
            output: 0.0,
        };
        Self {
            index: channel.clone(),
            thumb: channel,
            alpha: 1.0 - (-dt / (config.actuator_time_constant_ms * 1e-3)).exp(),
            max_force: config.actuator_max_force,
        }
    }

    /// Advances one tick. The returned stress is the lag state before this
    /// tick's input is absorbed, which makes the discrete response sample the
    /// continuous one exactly.
    pub fn step(&mut self, command: &FeedbackCommand) -> AppliedStress {
        AppliedStress {
            index: self.index.step(command.index_stress, self.alpha, self.max_force),
            thumb: self.thumb.step(command.thumb_stress, self.alpha, self.max_force),
        }
    }
}
