//! Trial protocol: event detection, the continuous-contact timer that gates
//! the beep, fixture perturbation and end-of-trial detection.

use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::tissue::ContactPhase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TissueEntry,
    FixtureFirstContact,
    ContinuousContactStart,
    Beep,
    Perturbation,
    ExtractionComplete,
    /// Interactive input was clamped to the hand workspace.
    InputClamped,
    /// Interactive input went silent; the hand is held at its last value.
    InputStale,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TissueEntry => "tissue_entry",
            EventKind::FixtureFirstContact => "fixture_first_contact",
            EventKind::ContinuousContactStart => "continuous_contact_start",
            EventKind::Beep => "beep",
            EventKind::Perturbation => "perturbation",
            EventKind::ExtractionComplete => "extraction_complete",
            EventKind::InputClamped => "input_clamped",
            EventKind::InputStale => "input_stale",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "tissue_entry" => EventKind::TissueEntry,
            "fixture_first_contact" => EventKind::FixtureFirstContact,
            "continuous_contact_start" => EventKind::ContinuousContactStart,
            "beep" => EventKind::Beep,
            "perturbation" => EventKind::Perturbation,
            "extraction_complete" => EventKind::ExtractionComplete,
            "input_clamped" => EventKind::InputClamped,
            "input_stale" => EventKind::InputStale,
            other => return Err(format!("unknown event `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub tick: u64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Running,
    Completed,
    Timeout,
    NonFinite,
    Aborted,
}

impl TrialOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialOutcome::Running => "running",
            TrialOutcome::Completed => "completed",
            TrialOutcome::Timeout => "timeout",
            TrialOutcome::NonFinite => "non_finite",
            TrialOutcome::Aborted => "aborted",
        }
    }
}

impl std::str::FromStr for TrialOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "running" => TrialOutcome::Running,
            "completed" => TrialOutcome::Completed,
            "timeout" => TrialOutcome::Timeout,
            "non_finite" => TrialOutcome::NonFinite,
            "aborted" => TrialOutcome::Aborted,
            other => return Err(format!("unknown outcome `{other}`")),
        })
    }
}

/// What the protocol needs to see from each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub tick: u64,
    pub phase: ContactPhase,
    pub fixture_contact: bool,
    pub hand_z: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolStep {
    /// Events detected on this tick. May include one dated earlier
    /// (the start of the contact run that produced the beep).
    pub events: Vec<Event>,
    pub beep: bool,
    /// New fixture depth, effective from the next tick.
    pub move_fixture_to: Option<f64>,
    pub finished: Option<TrialOutcome>,
}

#[derive(Debug, Clone)]
pub struct TrialProtocol {
    rate_hz: u32,
    hold_ticks: u64,
    timeout_ticks: u64,
    start_hand_z: f64,
    perturb_to: Option<f64>,
    entered_tissue: bool,
    touched_fixture: bool,
    contact_run_start: Option<u64>,
    beep_tick: Option<u64>,
    finished: Option<TrialOutcome>,
}

impl TrialProtocol {
    pub fn new(config: &ProtocolConfig, rate_hz: u32, start_hand_z: f64, perturb_to: Option<f64>) -> Self {
        let rate = f64::from(rate_hz);
        Self {
            rate_hz,
            hold_ticks: (config.contact_hold_s * rate).round() as u64,
            timeout_ticks: (config.timeout_s * rate).round() as u64,
            start_hand_z,
            perturb_to,
            entered_tissue: false,
            touched_fixture: false,
            contact_run_start: None,
            beep_tick: None,
            finished: None,
        }
    }

    pub fn beep_tick(&self) -> Option<u64> {
        self.beep_tick
    }

    pub fn finished(&self) -> Option<TrialOutcome> {
        self.finished
    }

    fn event(&self, kind: EventKind, tick: u64) -> Event {
        Event {
            kind,
            tick,
            t: tick as f64 / f64::from(self.rate_hz),
        }
    }

    pub fn observe(&mut self, obs: &Observation) -> ProtocolStep {
        let mut step = ProtocolStep::default();
        if self.finished.is_some() {
            step.finished = self.finished;
            return step;
        }

        if !self.entered_tissue && obs.phase != ContactPhase::NoContact {
            self.entered_tissue = true;
            step.events.push(self.event(EventKind::TissueEntry, obs.tick));
        }
        if obs.fixture_contact && !self.touched_fixture {
            self.touched_fixture = true;
            step.events.push(self.event(EventKind::FixtureFirstContact, obs.tick));
        }

        if self.beep_tick.is_none() {
            if obs.fixture_contact {
                let start = *self.contact_run_start.get_or_insert(obs.tick);
                if obs.tick - start >= self.hold_ticks {
                    self.beep_tick = Some(obs.tick);
                    step.beep = true;
                    step.events.push(self.event(EventKind::ContinuousContactStart, start));
                    step.events.push(self.event(EventKind::Beep, obs.tick));
                    if let Some(depth) = self.perturb_to {
                        step.move_fixture_to = Some(depth);
                        step.events.push(self.event(EventKind::Perturbation, obs.tick));
                    }
                }
            } else {
                self.contact_run_start = None;
            }
        } else if obs.hand_z <= self.start_hand_z {
            self.finished = Some(TrialOutcome::Completed);
            step.events.push(self.event(EventKind::ExtractionComplete, obs.tick));
        }

        if self.finished.is_none() && obs.tick + 1 >= self.timeout_ticks {
            self.finished = Some(TrialOutcome::Timeout);
        }
        step.finished = self.finished;
        step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn protocol(perturb: Option<f64>) -> TrialProtocol {
        TrialProtocol::new(&ProtocolConfig::default(), 1000, 0.0, perturb)
    }

    fn obs(tick: u64, contact: bool) -> Observation {
        Observation {
            tick,
            phase: ContactPhase::Penetration,
            fixture_contact: contact,
            hand_z: 0.04,
        }
    }

    #[test]
    fn beep_exactly_hold_after_run_start() {
        let mut p = protocol(None);
        let mut beep = None;
        let mut start = None;
        for tick in 0..20_000 {
            let contact = tick >= 1234;
            let step = p.observe(&obs(tick, contact));
            if step.beep {
                beep = Some(tick);
                start = step
                    .events
                    .iter()
                    .find(|e| e.kind == EventKind::ContinuousContactStart)
                    .map(|e| e.tick);
                break;
            }
        }
        assert_eq!(start, Some(1234));
        assert_eq!(beep, Some(6234));
    }

    #[test]
    fn contact_break_resets_timer() {
        let mut p = protocol(None);
        // contact from 100, broken for a single tick at 3100, then unbroken
        let mut beep = None;
        for tick in 0..20_000 {
            let contact = tick >= 100 && tick != 3100;
            if p.observe(&obs(tick, contact)).beep {
                beep = Some(tick);
                break;
            }
        }
        assert_eq!(beep, Some(3101 + 5000));
    }

    #[test]
    fn perturbation_coincides_with_beep() {
        let mut p = protocol(Some(0.15));
        for tick in 0..6000 {
            let step = p.observe(&obs(tick, true));
            if step.beep {
                assert_eq!(step.move_fixture_to, Some(0.15));
                let pert = step.events.iter().find(|e| e.kind == EventKind::Perturbation).unwrap();
                let beep = step.events.iter().find(|e| e.kind == EventKind::Beep).unwrap();
                assert_eq!(pert.tick, beep.tick);
                return;
            }
        }
        panic!("no beep");
    }

    #[test]
    fn beep_fires_once_and_extraction_completes() {
        let mut p = protocol(None);
        let mut beeps = 0;
        for tick in 0..5001 {
            beeps += p.observe(&obs(tick, true)).beep as usize;
        }
        for tick in 5001..9000 {
            beeps += p.observe(&obs(tick, tick % 7 != 0)).beep as usize;
        }
        assert_eq!(beeps, 1);
        let step = p.observe(&Observation {
            tick: 9000,
            phase: ContactPhase::NoContact,
            fixture_contact: false,
            hand_z: -1e-6,
        });
        assert_eq!(step.finished, Some(TrialOutcome::Completed));
        assert_eq!(step.events[0].kind, EventKind::ExtractionComplete);
    }

    #[test]
    fn timeout_without_contact() {
        let mut p = protocol(None);
        let mut finished = None;
        for tick in 0..100_000 {
            if let Some(outcome) = p.observe(&obs(tick, false)).finished {
                finished = Some((tick, outcome));
                break;
            }
        }
        assert_eq!(finished, Some((59_999, TrialOutcome::Timeout)));
    }
}
