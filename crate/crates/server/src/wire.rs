//! JSON text frames exchanged over `/session`.

use needlesim_core::protocol::TrialOutcome;
use needlesim_core::{Modality, TrialMetrics};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Absolute handle position, m.
    Input {
        hand_z: f64,
    },
    StartTrial(StartTrial),
    Abort,
}

/// Trial request. Everything but the modality falls back to the session
/// configuration; without an explicit depth the fixture is placed at a
/// seeded random depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartTrial {
    pub modality: Modality,
    pub fixture_depth: Option<f64>,
    pub feedback_delay_ms: Option<f64>,
    /// Move the fixture this much deeper at the beep, m.
    pub perturbation_offset: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    TrialStarted {
        trial_id: u64,
        modality: Modality,
    },
    /// Rendered scene. Positions are percent of the needle workspace below
    /// the tissue rest surface; negative is above it.
    State {
        t: f64,
        needle_pct: f64,
        tissue_pct: f64,
        visual_bar: f64,
        index_stress: f64,
        thumb_stress: f64,
        phase: String,
        beep: bool,
    },
    TrialDone {
        trial_id: u64,
        outcome: TrialOutcome,
        metrics: Option<TrialMetrics>,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let input: ClientMessage = serde_json::from_str(r#"{"type":"input","hand_z":0.012}"#).unwrap();
        assert_eq!(input, ClientMessage::Input { hand_z: 0.012 });
        let abort: ClientMessage = serde_json::from_str(r#"{"type":"abort"}"#).unwrap();
        assert_eq!(abort, ClientMessage::Abort);
        let start: ClientMessage =
            serde_json::from_str(r#"{"type":"start_trial","modality":"CCF","perturbation_offset":0.03}"#).unwrap();
        let ClientMessage::StartTrial(req) = start else {
            panic!("expected start_trial");
        };
        assert_eq!(req.modality, Modality::ContralateralCutaneous);
        assert_eq!(req.perturbation_offset, Some(0.03));
        assert_eq!(req.fixture_depth, None);
    }

    #[test]
    fn malformed_client_messages_are_rejected() {
        for text in [
            r#"{"type":"start_trial"}"#,
            r#"{"type":"start_trial","modality":"XF"}"#,
            r#"{"type":"start_trial","modality":"HF","depth":0.1}"#,
            r#"{"type":"input"}"#,
            r#"{"hand_z":0.1}"#,
        ] {
            assert!(serde_json::from_str::<ClientMessage>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn server_messages_use_schema_names() {
        let state = ServerMessage::State {
            t: 1.5,
            needle_pct: -2.0,
            tissue_pct: 0.5,
            visual_bar: 0.25,
            index_stress: 0.0,
            thumb_stress: 0.0,
            phase: "no_contact".into(),
            beep: false,
        };
        assert_eq!(
            state.to_json(),
            r#"{"type":"state","t":1.5,"needle_pct":-2.0,"tissue_pct":0.5,"visual_bar":0.25,"index_stress":0.0,"thumb_stress":0.0,"phase":"no_contact","beep":false}"#
        );
        let done = ServerMessage::TrialDone {
            trial_id: 3,
            outcome: TrialOutcome::Aborted,
            metrics: None,
        };
        assert_eq!(
            done.to_json(),
            r#"{"type":"trial_done","trial_id":3,"outcome":"aborted","metrics":null}"#
        );
    }
}
