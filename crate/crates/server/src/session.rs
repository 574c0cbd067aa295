//! Single-operator session state. Synchronous and clock-free: the pacing
//! thread decides how many ticks to advance, tests drive it directly.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use needlesim_core::experiment::draw_fixture_depth;
use needlesim_core::export::write_trials_csv;
use needlesim_core::haptic_loop::TelemetrySample;
use needlesim_core::metrics::MetricsError;
use needlesim_core::protocol::EventKind;
use needlesim_core::tissue::ContactPhase;
use needlesim_core::trial::{round_sig9, Perturbation, TrialEngine};
use needlesim_core::{compute_metrics, SimConfig, TrialConfig, TrialMetrics, TrialRecord};
use thiserror::Error;

use crate::wire::{ClientMessage, ServerMessage, StartTrial};

/// Experiment label of interactive records.
pub const SESSION_EXPERIMENT: &str = "session";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("a trial is already running")]
    TrialActive,
    #[error("no trial is running")]
    NoActiveTrial,
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("hand_z must be finite")]
    InvalidInput,
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::TrialActive => "trial_active",
            SessionError::NoActiveTrial => "no_active_trial",
            SessionError::InvalidTrial(_) => "invalid_trial",
            SessionError::InvalidInput => "invalid_input",
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Error {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug)]
struct ActiveTrial {
    id: u64,
    trial: TrialConfig,
    engine: TrialEngine,
    /// Held between inputs.
    hand_z: f64,
    silent_ticks: u64,
    stale_logged: bool,
    inputs: Vec<f64>,
    last_slot: Option<u64>,
}

/// A completed interactive trial with the per-tick hand positions that
/// drove it.
#[derive(Debug, Clone)]
pub struct FinishedTrial {
    pub id: u64,
    pub trial: TrialConfig,
    pub inputs: Vec<f64>,
    pub record: TrialRecord,
    pub metrics: Result<TrialMetrics, MetricsError>,
}

#[derive(Debug)]
pub struct Session {
    config: SimConfig,
    record_dir: Option<PathBuf>,
    next_id: u64,
    active: Option<ActiveTrial>,
    last_finished: Option<FinishedTrial>,
}

impl Session {
    pub fn new(config: SimConfig) -> Self {
        Self {
            config,
            record_dir: None,
            next_id: 1,
            active: None,
            last_finished: None,
        }
    }

    /// Dump every finished trial as `trial_<id>.csv` into `dir`.
    pub fn with_record_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.record_dir = Some(dir.into());
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn is_active(&self) -> bool {
        self.active.is_some()
    }

    pub fn last_finished(&self) -> Option<&FinishedTrial> {
        self.last_finished.as_ref()
    }

    pub fn apply(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>, SessionError> {
        match msg {
            ClientMessage::Input { hand_z } => self.handle_input(hand_z).map(|()| Vec::new()),
            ClientMessage::StartTrial(req) => self.start_trial(&req).map(|m| vec![m]),
            ClientMessage::Abort => self.abort(),
        }
    }

    pub fn start_trial(&mut self, req: &StartTrial) -> Result<ServerMessage, SessionError> {
        if self.active.is_some() {
            return Err(SessionError::TrialActive);
        }
        let id = self.next_id;
        let harness = &self.config.harness;
        let seed = req.seed.unwrap_or_else(|| harness.seed.wrapping_add(id));
        let fixture_depth = req.fixture_depth.unwrap_or_else(|| draw_fixture_depth(harness, seed));
        let trial = TrialConfig {
            trial_index: id as usize,
            modality: req.modality,
            fixture_depth,
            feedback_delay_ms: req
                .feedback_delay_ms
                .unwrap_or(self.config.loop_config.feedback_delay_ms),
            perturbation: req.perturbation_offset.map(|offset| Perturbation {
                new_depth: round_sig9(fixture_depth + offset),
            }),
            seed,
        };
        trial
            .validate(&self.config.tissue)
            .map_err(SessionError::InvalidTrial)?;

        self.next_id += 1;
        self.active = Some(ActiveTrial {
            id,
            engine: TrialEngine::new(&self.config, &trial, SESSION_EXPERIMENT),
            trial,
            hand_z: self.config.session.hand_workspace_min,
            silent_ticks: 0,
            stale_logged: false,
            inputs: Vec::new(),
            last_slot: None,
        });
        Ok(ServerMessage::TrialStarted {
            trial_id: id,
            modality: req.modality,
        })
    }

    /// Latest input wins; it is held until the next one arrives.
    pub fn handle_input(&mut self, hand_z: f64) -> Result<(), SessionError> {
        let active = self.active.as_mut().ok_or(SessionError::NoActiveTrial)?;
        if !hand_z.is_finite() {
            return Err(SessionError::InvalidInput);
        }
        let ws = &self.config.session;
        let clamped = hand_z.clamp(ws.hand_workspace_min, ws.hand_workspace_max);
        if clamped != hand_z {
            active.engine.log_event(EventKind::InputClamped);
        }
        active.hand_z = clamped;
        active.silent_ticks = 0;
        active.stale_logged = false;
        Ok(())
    }

    pub fn abort(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        let active = self.active.as_mut().ok_or(SessionError::NoActiveTrial)?;
        active.engine.abort();
        Ok(self.finish())
    }

    /// Runs up to `ticks` loop ticks and returns the messages to broadcast.
    pub fn advance(&mut self, ticks: u64) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        let rate = f64::from(self.config.loop_config.rate_hz);
        let stale_ticks = (self.config.session.input_stale_s * rate).round() as u64;
        let broadcast_hz = self.config.session.broadcast_hz;
        for _ in 0..ticks {
            let Some(active) = self.active.as_mut() else {
                break;
            };
            active.inputs.push(active.hand_z);
            let step = active.engine.step(active.hand_z);
            active.silent_ticks += 1;
            if active.silent_ticks > stale_ticks && !active.stale_logged {
                active.engine.log_event(EventKind::InputStale);
                active.stale_logged = true;
            }
            if let Ok(tick) = step {
                let t = &tick.telemetry;
                let slot = (t.tick as f64 * broadcast_hz / rate).floor() as u64;
                let finished = active.engine.is_finished();
                if active.last_slot != Some(slot) || tick.protocol.beep || finished {
                    active.last_slot = Some(slot);
                    out.push(state_message(&self.config, t, tick.protocol.beep));
                }
            }
            if active.engine.is_finished() {
                out.extend(self.finish());
            }
        }
        out
    }

    fn finish(&mut self) -> Vec<ServerMessage> {
        let Some(active) = self.active.take() else {
            return Vec::new();
        };
        let record = active.engine.into_record();
        let metrics = compute_metrics(&record);
        let mut out = vec![ServerMessage::TrialDone {
            trial_id: active.id,
            outcome: record.outcome,
            metrics: metrics.clone().ok(),
        }];
        if let Some(dir) = &self.record_dir {
            let path = dir.join(format!("trial_{}.csv", active.id));
            let written = std::fs::create_dir_all(dir)
                .and_then(|()| File::create(&path))
                .and_then(|f| write_trials_csv(std::slice::from_ref(&record), BufWriter::new(f)));
            if let Err(e) = written {
                out.push(ServerMessage::Error {
                    code: "record_write".into(),
                    message: format!("{}: {e}", path.display()),
                });
            }
        }
        self.last_finished = Some(FinishedTrial {
            id: active.id,
            trial: active.trial,
            inputs: active.inputs,
            record,
            metrics,
        });
        out
    }
}

/// What the operator may see: the tissue surface and the needle down to the
/// surface, never the fixture or the inserted part.
pub fn state_message(config: &SimConfig, t: &TelemetrySample, beep: bool) -> ServerMessage {
    let rest = config.tissue.surface_rest;
    let span = config.loop_config.motion_scale * config.session.hand_workspace_max - rest;
    let pct = |z: f64| (z - rest) / span * 100.0;
    let visible_tip = match t.phase {
        ContactPhase::Penetration => t.needle_z.min(t.surface_z),
        _ => t.needle_z,
    };
    ServerMessage::State {
        t: t.t,
        needle_pct: pct(visible_tip),
        tissue_pct: pct(t.surface_z),
        visual_bar: t.command.visual_bar,
        index_stress: t.command.index_stress,
        thumb_stress: t.command.thumb_stress,
        phase: t.phase.as_str().to_string(),
        beep,
    }
}
