//! Fixed-rate master/slave loop.
//!
//! Each tick reads the hand position, quantizes it to the encoder grid, scales
//! it into the virtual scene, advances the tissue, delays the resulting force on
//! the way back and hands it to the display modality.

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::delay::DelayLine;
use crate::feedback::{route_force, CutaneousActuator, FeedbackCommand, FeedbackConfig, Modality};
use crate::tissue::{self, ContactPhase, NeedleState, TissueError, TissueParams, TissueState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub rate_hz: u32,
    /// Delay on the environment-to-display path.
    pub feedback_delay_ms: f64,
    /// Encoder quantum in hand space, m.
    pub encoder_resolution: f64,
    /// Needle displacement per unit hand displacement.
    pub motion_scale: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            rate_hz: 1000,
            feedback_delay_ms: 0.0,
            encoder_resolution: 1e-5,
            motion_scale: 3.0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rate_hz == 0 {
            return Err(ConfigError::invalid("rate_hz", "must be positive"));
        }
        if !(self.feedback_delay_ms.is_finite() && self.feedback_delay_ms >= 0.0) {
            return Err(ConfigError::invalid("feedback_delay_ms", "must be non-negative"));
        }
        if !(self.encoder_resolution.is_finite() && self.encoder_resolution > 0.0) {
            return Err(ConfigError::invalid("encoder_resolution", "must be strictly positive"));
        }
        if !(self.motion_scale.is_finite() && self.motion_scale > 0.0) {
            return Err(ConfigError::invalid("motion_scale", "must be strictly positive"));
        }
        // dt must stay inside the tissue integrator's comfort zone
        if self.rate_hz < 500 {
            return Err(ConfigError::invalid("rate_hz", "must be at least 500 Hz (dt <= 2 ms)"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.rate_hz)
    }

    /// Simulated time of tick `k`; exact for any tick count.
    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 / f64::from(self.rate_hz)
    }
}

/// Tolerance, in encoder counts, below which a reading snaps to the grid point
/// above it. Absorbs representation error in values like 0.02 / 1e-5.
const GRID_SNAP: f64 = 1e-9;

/// Encoder count of `x` (floor quantization).
pub fn encoder_count(x: f64, resolution: f64) -> i64 {
    (x / resolution + GRID_SNAP).floor() as i64
}

/// Largest multiple of `resolution` not above `x`.
pub fn quantize_position(x: f64, resolution: f64) -> f64 {
    encoder_count(x, resolution) as f64 * resolution
}

pub fn scale_to_virtual(hand_z: f64, config: &LoopConfig) -> f64 {
    config.motion_scale * quantize_position(hand_z, config.encoder_resolution)
}

/// One row of loop telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub tick: u64,
    pub t: f64,
    pub hand_z: f64,
    pub needle_z: f64,
    pub surface_z: f64,
    pub fixture_depth: f64,
    pub tissue_force: f64,
    pub fixture_force: f64,
    pub phase: ContactPhase,
    pub fixture_contact: bool,
    /// What the displays actually delivered this tick (post delay and actuator).
    pub command: FeedbackCommand,
}

/// Owns every piece of mutable loop state.
#[derive(Debug, Clone)]
pub struct HapticLoop {
    params: TissueParams,
    config: LoopConfig,
    feedback: FeedbackConfig,
    modality: Modality,
    tissue: TissueState,
    previous_needle_z: Option<f64>,
    feedback_delay: DelayLine,
    actuator: Option<CutaneousActuator>,
    tick: u64,
}

impl HapticLoop {
    pub fn new(params: TissueParams, config: LoopConfig, feedback: FeedbackConfig, modality: Modality) -> Self {
        let actuator = modality
            .is_cutaneous()
            .then(|| CutaneousActuator::new(&feedback, config.rate_hz));
        Self {
            tissue: TissueState::at_rest(&params),
            feedback_delay: DelayLine::from_millis(config.feedback_delay_ms, config.rate_hz),
            params,
            config,
            feedback,
            modality,
            previous_needle_z: None,
            actuator,
            tick: 0,
        }
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn params(&self) -> &TissueParams {
        &self.params
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn tissue(&self) -> &TissueState {
        &self.tissue
    }

    /// Number of completed ticks.
    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Moves the fixture; takes effect from the next tick.
    pub fn set_fixture_depth(&mut self, depth: f64) {
        self.params.fixture_depth = depth;
    }

    pub fn tick(&mut self, hand_z: f64) -> Result<TelemetrySample, TissueError> {
        let dt = self.config.dt();
        let needle_z = scale_to_virtual(hand_z, &self.config);
        let needle_v = match self.previous_needle_z {
            Some(prev) => (needle_z - prev) / dt,
            None => 0.0,
        };
        let needle = NeedleState {
            z: needle_z,
            v: needle_v,
        };

        let out = tissue::step(&self.tissue, &needle, &self.params, dt)?;
        self.tissue = out.state;
        self.previous_needle_z = Some(needle_z);

        let delayed = self.feedback_delay.push(out.total_force());
        let mut command = route_force(delayed, self.modality, self.feedback.bar_full_scale);
        if let Some(actuator) = self.actuator.as_mut() {
            let applied = actuator.step(&command);
            command.index_stress = applied.index;
            command.thumb_stress = applied.thumb;
        }

        let sample = TelemetrySample {
            tick: self.tick,
            t: self.config.time_of(self.tick),
            hand_z,
            needle_z,
            surface_z: out.state.surface_z,
            fixture_depth: self.params.fixture_depth,
            tissue_force: out.tissue_force,
            fixture_force: out.fixture_force,
            phase: out.state.phase,
            fixture_contact: out.state.fixture_contact,
            command,
        };
        self.tick += 1;
        Ok(sample)
    }
}
