//! A single trial: the haptic loop and protocol stepped together, driven either
//! by the simulated operator or by a recorded/live hand-position stream.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::feedback::{Hand, Modality};
use crate::haptic_loop::{HapticLoop, LoopConfig, TelemetrySample};
use crate::operator::{Intent, SimulatedOperator};
use crate::protocol::{Event, EventKind, Observation, ProtocolStep, TrialOutcome, TrialProtocol};
use crate::tissue::{ContactPhase, TissueError, TissueParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub new_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_index: usize,
    pub modality: Modality,
    pub fixture_depth: f64,
    pub feedback_delay_ms: f64,
    /// Fixture jump applied together with the beep.
    pub perturbation: Option<Perturbation>,
    pub seed: u64,
}

impl TrialConfig {
    /// A trial at the configured default fixture depth and delay.
    pub fn nominal(config: &SimConfig, modality: Modality) -> Self {
        Self {
            trial_index: 0,
            modality,
            fixture_depth: config.tissue.fixture_depth,
            feedback_delay_ms: config.loop_config.feedback_delay_ms,
            perturbation: None,
            seed: config.harness.seed,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, tissue: &TissueParams) -> Result<(), String> {
        if !(self.fixture_depth > tissue.surface_rest) {
            return Err("fixture_depth must lie deeper than the tissue surface".into());
        }
        if !(self.feedback_delay_ms.is_finite() && self.feedback_delay_ms >= 0.0) {
            return Err("feedback_delay_ms must be non-negative".into());
        }
        if let Some(p) = self.perturbation {
            if !(p.new_depth > self.fixture_depth) {
                return Err("perturbation must move the fixture deeper".into());
            }
        }
        Ok(())
    }
}

/// Rounds to 9 significant digits, the precision of exported telemetry.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// One logged tick, rounded to export precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub tick: u64,
    pub t: f64,
    pub hand_z: f64,
    pub needle_z: f64,
    pub surface_z: f64,
    pub fixture_depth: f64,
    pub tissue_force: f64,
    pub fixture_force: f64,
    pub phase: ContactPhase,
    pub kinesthetic_force: f64,
    pub index_stress: f64,
    pub thumb_stress: f64,
    pub visual_bar: f64,
    pub target_hand: Option<Hand>,
    /// Operator intent after this tick; `None` for human-driven trials.
    pub intent: Option<Intent>,
}

impl TrialSample {
    pub fn from_telemetry(s: &TelemetrySample, intent: Option<Intent>) -> Self {
        Self {
            tick: s.tick,
            t: s.t,
            hand_z: round_sig9(s.hand_z),
            needle_z: round_sig9(s.needle_z),
            surface_z: round_sig9(s.surface_z),
            fixture_depth: round_sig9(s.fixture_depth),
            tissue_force: round_sig9(s.tissue_force),
            fixture_force: round_sig9(s.fixture_force),
            phase: s.phase,
            kinesthetic_force: round_sig9(s.command.kinesthetic_force),
            index_stress: round_sig9(s.command.index_stress),
            thumb_stress: round_sig9(s.command.thumb_stress),
            visual_bar: round_sig9(s.command.visual_bar),
            target_hand: s.command.target_hand,
            intent,
        }
    }

    /// Needle excursion past the fixture as it stood on this tick.
    pub fn penetration(&self) -> f64 {
        (self.needle_z - self.fixture_depth).max(0.0)
    }

    pub fn in_fixture(&self) -> bool {
        self.needle_z >= self.fixture_depth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub experiment: String,
    pub trial_index: usize,
    pub modality: Modality,
    pub seed: u64,
    pub fixture_depth: f64,
    pub feedback_delay_ms: f64,
    pub perturbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub meta: TrialMeta,
    pub samples: Vec<TrialSample>,
    /// Sorted by tick.
    pub events: Vec<Event>,
    pub outcome: TrialOutcome,
}

impl TrialRecord {
    pub fn first_event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    /// Inserts keeping tick order; ties keep insertion order.
    pub fn push_event(&mut self, event: Event) {
        let at = self.events.partition_point(|e| e.tick <= event.tick);
        self.events.insert(at, event);
    }
}

/// Result of one engine tick.
#[derive(Debug, Clone)]
pub struct EngineTick {
    pub telemetry: TelemetrySample,
    pub protocol: ProtocolStep,
}

/// Haptic loop plus protocol plus the growing record. Shared by batch runs,
/// replays and the interactive server so all three tick identically.
#[derive(Debug, Clone)]
pub struct TrialEngine {
    haptic: HapticLoop,
    protocol: TrialProtocol,
    record: TrialRecord,
}

impl TrialEngine {
    pub fn new(config: &SimConfig, trial: &TrialConfig, experiment: &str) -> Self {
        let tissue = TissueParams {
            fixture_depth: trial.fixture_depth,
            ..config.tissue
        };
        let loop_config = LoopConfig {
            feedback_delay_ms: trial.feedback_delay_ms,
            ..config.loop_config
        };
        let protocol = TrialProtocol::new(
            &config.protocol,
            loop_config.rate_hz,
            0.0,
            trial.perturbation.map(|p| p.new_depth),
        );
        Self {
            haptic: HapticLoop::new(tissue, loop_config, config.feedback, trial.modality),
            protocol,
            record: TrialRecord {
                meta: TrialMeta {
                    experiment: experiment.to_string(),
                    trial_index: trial.trial_index,
                    modality: trial.modality,
                    seed: trial.seed,
                    fixture_depth: trial.fixture_depth,
                    feedback_delay_ms: trial.feedback_delay_ms,
                    perturbed: trial.perturbation.is_some(),
                },
                samples: Vec::new(),
                events: Vec::new(),
                outcome: TrialOutcome::Running,
            },
        }
    }

    pub fn haptic(&self) -> &HapticLoop {
        &self.haptic
    }

    pub fn record(&self) -> &TrialRecord {
        &self.record
    }

    pub fn is_finished(&self) -> bool {
        self.record.outcome != TrialOutcome::Running
    }

    /// Advances one tick with the given hand position and logs it.
    pub fn step(&mut self, hand_z: f64) -> Result<EngineTick, TissueError> {
        let telemetry = match self.haptic.tick(hand_z) {
            Ok(t) => t,
            Err(e) => {
                self.record.outcome = TrialOutcome::NonFinite;
                return Err(e);
            }
        };
        let protocol = self.protocol.observe(&Observation {
            tick: telemetry.tick,
            phase: telemetry.phase,
            fixture_contact: telemetry.fixture_contact,
            hand_z,
        });
        if let Some(depth) = protocol.move_fixture_to {
            self.haptic.set_fixture_depth(depth);
        }
        for event in &protocol.events {
            self.record.push_event(*event);
        }
        if let Some(outcome) = protocol.finished {
            self.record.outcome = outcome;
        }
        self.record.samples.push(TrialSample::from_telemetry(&telemetry, None));
        Ok(EngineTick { telemetry, protocol })
    }

    /// Sets the intent column of the latest sample.
    pub fn annotate_intent(&mut self, intent: Intent) {
        if let Some(last) = self.record.samples.last_mut() {
            last.intent = Some(intent);
        }
    }

    /// Logs an out-of-band event (input handling) at the latest tick.
    pub fn log_event(&mut self, kind: EventKind) {
        let tick = self.haptic.ticks().saturating_sub(1);
        let t = self.haptic.config().time_of(tick);
        self.record.push_event(Event { kind, tick, t });
    }

    pub fn abort(&mut self) {
        if self.record.outcome == TrialOutcome::Running {
            self.record.outcome = TrialOutcome::Aborted;
        }
    }

    pub fn into_record(self) -> TrialRecord {
        self.record
    }
}

/// Runs a full trial with the simulated operator.
pub fn run_trial(config: &SimConfig, trial: &TrialConfig, experiment: &str) -> TrialRecord {
    let mut engine = TrialEngine::new(config, trial, experiment);
    let mut operator = SimulatedOperator::new(
        config.operator,
        trial.modality,
        config.feedback.bar_full_scale,
        config.loop_config.rate_hz,
        trial.seed,
    );
    while !engine.is_finished() {
        let Ok(tick) = engine.step(operator.hand_z()) else {
            break;
        };
        operator.respond(&tick.telemetry.command, tick.protocol.beep);
        engine.annotate_intent(operator.state().intent);
    }
    engine.into_record()
}

/// Drives a trial from a recorded hand-position stream, one value per tick.
/// Stops at the end of the stream or when the protocol finishes.
pub fn replay_trial(config: &SimConfig, trial: &TrialConfig, experiment: &str, inputs: &[f64]) -> TrialRecord {
    let mut engine = TrialEngine::new(config, trial, experiment);
    for &hand_z in inputs {
        if engine.is_finished() || engine.step(hand_z).is_err() {
            break;
        }
    }
    engine.into_record()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_sig9_examples() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(round_sig9(-3.0), -3.0);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(round_sig9(1.0000000004), 1.0);
        assert_eq!(
            round_sig9(round_sig9(std::f64::consts::PI)),
            round_sig9(std::f64::consts::PI)
        );
    }

    #[test]
    fn default_haptic_trial_event_order() {
        let config = SimConfig::default();
        let trial = TrialConfig::nominal(&config, Modality::Haptic);
        let record = run_trial(&config, &trial, "test");
        assert_eq!(record.outcome, TrialOutcome::Completed);
        let t = |k| record.first_event(k).unwrap().t;
        assert!(t(EventKind::TissueEntry) < t(EventKind::FixtureFirstContact));
        assert!(t(EventKind::FixtureFirstContact) < t(EventKind::Beep));
        let start = record.first_event(EventKind::ContinuousContactStart).unwrap();
        let beep = record.first_event(EventKind::Beep).unwrap();
        assert_eq!(beep.tick - start.tick, 5000);
        assert!(((beep.t - start.t) - 5.0).abs() < 1e-9);
        assert!(record.events.windows(2).all(|w| w[0].tick <= w[1].tick));
    }

    #[test]
    fn unreachable_fixture_times_out() {
        let mut config = SimConfig::default();
        config.operator.stop_force_threshold = 1e6;
        let mut trial = TrialConfig::nominal(&config, Modality::Cutaneous);
        // beyond the 60 s reach of the hand
        trial.fixture_depth = 10.0;
        let record = run_trial(&config, &trial, "test");
        assert_eq!(record.outcome, TrialOutcome::Timeout);
        assert!(record.first_event(EventKind::Beep).is_none());
        assert_eq!(record.samples.len(), 60_000);
    }

    #[test]
    fn threshold_below_tissue_forces_times_out() {
        let mut config = SimConfig::default();
        config.operator.stop_force_threshold = 0.01;
        let trial = TrialConfig::nominal(&config, Modality::Haptic);
        let record = run_trial(&config, &trial, "test");
        assert_eq!(record.outcome, TrialOutcome::Timeout);
        assert!(record.first_event(EventKind::FixtureFirstContact).is_none());
    }

    #[test]
    fn perturbation_event_matches_beep() {
        let config = SimConfig::default();
        let mut trial = TrialConfig::nominal(&config, Modality::Visual);
        trial.perturbation = Some(Perturbation {
            new_depth: trial.fixture_depth + 0.03,
        });
        let record = run_trial(&config, &trial, "test");
        let beep = record.first_event(EventKind::Beep).unwrap();
        let pert = record.first_event(EventKind::Perturbation).unwrap();
        assert_eq!(beep.t, pert.t);
        let after = record.samples.iter().find(|s| s.tick == beep.tick + 1).unwrap();
        assert!((after.fixture_depth - (trial.fixture_depth + 0.03)).abs() < 1e-12);
    }

    #[test]
    fn replay_reproduces_operator_driven_telemetry() {
        let config = SimConfig::default();
        let trial = TrialConfig::nominal(&config, Modality::Cutaneous);
        let mut engine = TrialEngine::new(&config, &trial, "test");
        let mut operator = SimulatedOperator::new(config.operator, trial.modality, 3.5, 1000, 0);
        let mut inputs = Vec::new();
        while !engine.is_finished() {
            inputs.push(operator.hand_z());
            let tick = engine.step(operator.hand_z()).unwrap();
            operator.respond(&tick.telemetry.command, tick.protocol.beep);
        }
        let live = engine.into_record();
        let replay = replay_trial(&config, &trial, "test", &inputs);
        assert_eq!(replay, live);
        assert_eq!(replay.outcome, TrialOutcome::Completed);
    }

    #[test]
    fn trial_config_validation() {
        let config = SimConfig::default();
        let mut trial = TrialConfig::nominal(&config, Modality::Haptic);
        assert!(trial.validate(&config.tissue).is_ok());
        trial.fixture_depth = 0.01;
        assert!(trial.validate(&config.tissue).is_err());
        let mut trial = TrialConfig::nominal(&config, Modality::Haptic);
        trial.perturbation = Some(Perturbation { new_depth: 0.1 });
        assert!(trial.validate(&config.tissue).is_err());
    }
}
