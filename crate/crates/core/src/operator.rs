//! Simulated operator used in batch runs.
//!
//! The hand is a point mass driven by a PD servo toward an intent target. The
//! target advances while inserting, freezes once enough force is perceived, and
//! retreats after the beep. Only haptic feedback pushes on the hand physically;
//! every modality also reaches the policy through its own perception delay.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::delay::{delay_ticks, DelayLine};
use crate::feedback::{FeedbackCommand, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorParams {
    pub hand_mass: f64,
    pub pd_stiffness: f64,
    pub pd_damping: f64,
    /// Hand-space speed of the target while inserting, m/s.
    pub insertion_speed: f64,
    pub extraction_speed: f64,
    /// Perceived force that makes the operator stop, N.
    pub stop_force_threshold: f64,
    pub perception_delay_hf_ms: f64,
    pub perception_delay_vf_ms: f64,
    pub perception_delay_cf_ms: f64,
    pub perception_delay_ccf_ms: f64,
    /// Time between the beep and the start of extraction.
    pub beep_reaction_ms: f64,
    /// Standard deviation of zero-mean noise on the PD target, m. Zero disables it.
    pub position_noise_std: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            hand_mass: 0.5,
            pd_stiffness: 300.0,
            pd_damping: 25.0,
            insertion_speed: 0.01,
            extraction_speed: 0.02,
            stop_force_threshold: 1.0,
            perception_delay_hf_ms: 0.0,
            perception_delay_vf_ms: 250.0,
            perception_delay_cf_ms: 0.0,
            perception_delay_ccf_ms: 20.0,
            beep_reaction_ms: 200.0,
            position_noise_std: 0.0,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("hand_mass", self.hand_mass),
            ("pd_stiffness", self.pd_stiffness),
            ("pd_damping", self.pd_damping),
            ("insertion_speed", self.insertion_speed),
            ("extraction_speed", self.extraction_speed),
            ("stop_force_threshold", self.stop_force_threshold),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and strictly positive"));
            }
        }
        let non_negative = [
            ("perception_delay_hf_ms", self.perception_delay_hf_ms),
            ("perception_delay_vf_ms", self.perception_delay_vf_ms),
            ("perception_delay_cf_ms", self.perception_delay_cf_ms),
            ("perception_delay_ccf_ms", self.perception_delay_ccf_ms),
            ("beep_reaction_ms", self.beep_reaction_ms),
            ("position_noise_std", self.position_noise_std),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn perception_delay_ms(&self, modality: Modality) -> f64 {
        match modality {
            Modality::Haptic => self.perception_delay_hf_ms,
            Modality::Visual => self.perception_delay_vf_ms,
            Modality::Cutaneous => self.perception_delay_cf_ms,
            Modality::ContralateralCutaneous => self.perception_delay_ccf_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Inserting,
    Holding,
    Extracting,
    Done,
}

impl Intent {
    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Inserting => "inserting",
            Intent::Holding => "holding",
            Intent::Extracting => "extracting",
            Intent::Done => "done",
        }
    }
}

impl std::str::FromStr for Intent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inserting" => Ok(Intent::Inserting),
            "holding" => Ok(Intent::Holding),
            "extracting" => Ok(Intent::Extracting),
            "done" => Ok(Intent::Done),
            other => Err(format!("unknown intent `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorState {
    pub hand_z: f64,
    pub hand_v: f64,
    pub intent: Intent,
    pub perceived_force: f64,
    pub intent_target: f64,
    /// Where the hand started; extraction ends when it is back there.
    pub start_z: f64,
    /// Ticks left before reacting to a beep already heard.
    pub reaction_ticks_left: Option<u32>,
}

impl OperatorState {
    pub fn at(start_z: f64) -> Self {
        Self {
            hand_z: start_z,
            hand_v: 0.0,
            intent: Intent::Inserting,
            perceived_force: 0.0,
            intent_target: start_z,
            start_z,
            reaction_ticks_left: None,
        }
    }
}

/// Modality-specific perception channel.
#[derive(Debug, Clone)]
pub struct Perception {
    modality: Modality,
    bar_full_scale: f64,
    delay: DelayLine,
}

impl Perception {
    pub fn new(modality: Modality, params: &OperatorParams, bar_full_scale: f64, rate_hz: u32) -> Self {
        Self {
            modality,
            bar_full_scale,
            delay: DelayLine::new(delay_ticks(params.perception_delay_ms(modality), rate_hz)),
        }
    }

    /// Force magnitude the operator becomes aware of this tick.
    pub fn perceive(&mut self, feedback: &FeedbackCommand) -> f64 {
        let displayed = match self.modality {
            Modality::Haptic => feedback.kinesthetic_force.abs(),
            Modality::Visual => feedback.visual_bar * self.bar_full_scale,
            Modality::Cutaneous | Modality::ContralateralCutaneous => feedback.cutaneous_magnitude(),
        };
        self.delay.push(displayed)
    }
}

/// Everything the policy sees on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatorInput {
    pub perceived: f64,
    pub beep: bool,
    /// Physical handle force, nonzero only under haptic feedback.
    pub kinesthetic_force: f64,
    /// Noise added to the PD target this tick.
    pub target_noise: f64,
}

/// One tick of policy plus hand dynamics. Returns the new state and the PD
/// force the arm applied.
pub fn act(state: &OperatorState, input: &OperatorInput, params: &OperatorParams, dt: f64) -> (OperatorState, f64) {
    let mut next = *state;
    next.perceived_force = input.perceived;

    if input.beep && next.reaction_ticks_left.is_none() && next.intent < Intent::Extracting {
        next.reaction_ticks_left = Some((params.beep_reaction_ms * 1e-3 / dt).round() as u32);
    }

    if next.intent == Intent::Inserting && input.perceived >= params.stop_force_threshold {
        next.intent = Intent::Holding;
    }
    if let Some(left) = next.reaction_ticks_left {
        if next.intent < Intent::Extracting {
            if left == 0 {
                next.intent = Intent::Extracting;
            } else {
                next.reaction_ticks_left = Some(left - 1);
            }
        }
    }
    if next.intent == Intent::Extracting && next.hand_z <= next.start_z {
        next.intent = Intent::Done;
    }

    let target_v = match next.intent {
        Intent::Inserting => params.insertion_speed,
        Intent::Extracting => -params.extraction_speed,
        Intent::Holding | Intent::Done => 0.0,
    };
    next.intent_target += target_v * dt;

    let pd = params.pd_stiffness * (next.intent_target + input.target_noise - next.hand_z)
        + params.pd_damping * (target_v - next.hand_v);
    let accel = (pd + input.kinesthetic_force) / params.hand_mass;
    next.hand_v += accel * dt;
    next.hand_z += next.hand_v * dt;
    (next, pd)
}

/// Operator state plus its perception channel and noise source.
#[derive(Debug, Clone)]
pub struct SimulatedOperator {
    params: OperatorParams,
    state: OperatorState,
    perception: Perception,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    dt: f64,
}

impl SimulatedOperator {
    pub fn new(params: OperatorParams, modality: Modality, bar_full_scale: f64, rate_hz: u32, seed: u64) -> Self {
        let noise = (params.position_noise_std > 0.0).then(|| {
            (
                ChaCha8Rng::seed_from_u64(seed),
                Normal::new(0.0, params.position_noise_std).expect("validated noise std"),
            )
        });
        Self {
            perception: Perception::new(modality, &params, bar_full_scale, rate_hz),
            state: OperatorState::at(0.0),
            params,
            noise,
            dt: 1.0 / f64::from(rate_hz),
        }
    }

    pub fn state(&self) -> &OperatorState {
        &self.state
    }

    pub fn hand_z(&self) -> f64 {
        self.state.hand_z
    }

    /// Perceives this tick's feedback and moves the hand. Returns the PD force.
    pub fn respond(&mut self, feedback: &FeedbackCommand, beep: bool) -> f64 {
        let perceived = self.perception.perceive(feedback);
        let target_noise = match self.noise.as_mut() {
            Some((rng, dist)) => dist.sample(rng),
            None => 0.0,
        };
        let input = OperatorInput {
            perceived,
            beep,
            kinesthetic_force: feedback.kinesthetic_force,
            target_noise,
        };
        let (next, pd) = act(&self.state, &input, &self.params, self.dt);
        self.state = next;
        pd
    }
}
