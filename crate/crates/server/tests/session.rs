use needlesim_core::protocol::{EventKind, TrialOutcome};
use needlesim_core::tissue::ContactPhase;
use needlesim_core::trial::replay_trial;
use needlesim_core::{Modality, SimConfig};
use needlesim_server::session::SESSION_EXPERIMENT;
use needlesim_server::{ServerMessage, Session, SessionError, StartTrial};
use serde_json::Value;

const INPUT_EVERY: u64 = 16;

fn start(modality: Modality) -> StartTrial {
    StartTrial {
        modality,
        fixture_depth: Some(0.123),
        feedback_delay_ms: None,
        perturbation_offset: None,
        seed: None,
    }
}

/// A human stand-in sending positions at about 60 Hz: push in at 1 cm/s
/// until slightly past the fixture, hold until the beep, pull out.
fn drive(session: &mut Session, modality: Modality) -> Vec<ServerMessage> {
    session.start_trial(&start(modality)).unwrap();
    let mut messages = Vec::new();
    let mut hand: f64 = 0.0;
    let mut extracting = false;
    let stop = 0.123 / 3.0 + 0.0004;
    while session.is_active() {
        let batch = session.advance(INPUT_EVERY);
        extracting |= batch
            .iter()
            .any(|m| matches!(m, ServerMessage::State { beep: true, .. }));
        messages.extend(batch);
        let step = 0.01 * INPUT_EVERY as f64 / 1000.0;
        hand = if extracting {
            hand - 2.0 * step
        } else {
            (hand + step).min(stop)
        };
        if session.is_active() {
            session.handle_input(hand).unwrap();
        }
    }
    messages
}

fn numbers(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.push(n.as_f64().unwrap()),
        Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
        Value::Object(o) => o.values().for_each(|x| numbers(x, out)),
        _ => {}
    }
}

#[test]
fn state_messages_hide_fixture_and_inserted_needle() {
    let config = SimConfig::default();
    for modality in Modality::ALL {
        let mut session = Session::new(config);
        let messages = drive(&mut session, modality);
        let finished = session.last_finished().unwrap();
        assert_eq!(finished.record.outcome, TrialOutcome::Completed, "{modality}");
        let span = 3.0 * 0.07 - 0.02;
        let pct = |z: f64| (z - 0.02) / span * 100.0;

        let mut saw_penetration = false;
        for m in &messages {
            let ServerMessage::State {
                t,
                needle_pct,
                tissue_pct,
                phase,
                ..
            } = m
            else {
                continue;
            };
            let json: Value = serde_json::from_str(&m.to_json()).unwrap();
            let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
            keys.sort_unstable();
            assert_eq!(
                keys,
                [
                    "beep",
                    "index_stress",
                    "needle_pct",
                    "phase",
                    "t",
                    "thumb_stress",
                    "tissue_pct",
                    "type",
                    "visual_bar"
                ]
            );
            let sample = finished.record.samples.iter().find(|s| s.t == *t).unwrap();
            let mut nums = Vec::new();
            numbers(&json, &mut nums);
            let hidden = [
                sample.fixture_depth,
                pct(sample.fixture_depth),
                sample.penetration(),
                sample.needle_z,
                pct(sample.needle_z),
            ];
            if phase == ContactPhase::Penetration.as_str() {
                saw_penetration = true;
                assert!(needle_pct <= tissue_pct);
                for h in hidden {
                    assert!(h == 0.0 || !nums.contains(&h), "{modality} t={t} leaks {h}");
                }
            } else {
                for h in &hidden[..3] {
                    assert!(*h == 0.0 || !nums.contains(h), "{modality} t={t} leaks {h}");
                }
            }
        }
        assert!(saw_penetration);
    }
}

#[test]
fn beep_is_flagged_exactly_once_at_the_beep_tick() {
    let mut session = Session::new(SimConfig::default());
    let messages = drive(&mut session, Modality::Haptic);
    let beeps: Vec<f64> = messages
        .iter()
        .filter_map(|m| match m {
            ServerMessage::State { t, beep: true, .. } => Some(*t),
            _ => None,
        })
        .collect();
    let record = &session.last_finished().unwrap().record;
    let beep = record.first_event(EventKind::Beep).unwrap();
    assert_eq!(beeps, [beep.t]);
    let done = messages.last().unwrap();
    assert!(matches!(
        done,
        ServerMessage::TrialDone {
            outcome: TrialOutcome::Completed,
            metrics: Some(_),
            ..
        }
    ));
}

#[test]
fn interactive_trial_replays_bit_exactly_through_batch_path() {
    let config = SimConfig::default();
    for modality in [Modality::Haptic, Modality::ContralateralCutaneous] {
        let mut session = Session::new(config);
        drive(&mut session, modality);
        let finished = session.last_finished().unwrap();
        let replayed = replay_trial(&config, &finished.trial, SESSION_EXPERIMENT, &finished.inputs);
        assert_eq!(replayed.samples, finished.record.samples);
        assert_eq!(replayed.outcome, finished.record.outcome);
        let live_events: Vec<_> = finished
            .record
            .events
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::InputClamped | EventKind::InputStale))
            .copied()
            .collect();
        assert_eq!(replayed.events, live_events);
    }
}

#[test]
fn visual_trials_carry_only_the_bar() {
    let mut session = Session::new(SimConfig::default());
    let messages = drive(&mut session, Modality::Visual);
    let mut max_bar: f64 = 0.0;
    for m in messages {
        if let ServerMessage::State {
            visual_bar,
            index_stress,
            thumb_stress,
            ..
        } = m
        {
            assert_eq!((index_stress, thumb_stress), (0.0, 0.0));
            max_bar = max_bar.max(visual_bar);
        }
    }
    assert!(max_bar > 0.0 && max_bar <= 1.0);
}

#[test]
fn lifecycle_errors() {
    let mut session = Session::new(SimConfig::default());
    assert_eq!(session.handle_input(0.01), Err(SessionError::NoActiveTrial));
    assert_eq!(session.abort().unwrap_err(), SessionError::NoActiveTrial);
    let ack = session.start_trial(&start(Modality::Cutaneous)).unwrap();
    assert_eq!(
        ack,
        ServerMessage::TrialStarted {
            trial_id: 1,
            modality: Modality::Cutaneous
        }
    );
    assert_eq!(
        session.start_trial(&start(Modality::Haptic)),
        Err(SessionError::TrialActive)
    );
    assert_eq!(session.handle_input(f64::NAN), Err(SessionError::InvalidInput));
    session.advance(100);
    let done = session.abort().unwrap();
    assert!(matches!(
        done[..],
        [ServerMessage::TrialDone {
            trial_id: 1,
            outcome: TrialOutcome::Aborted,
            ..
        }]
    ));
    assert!(!session.is_active());
    let ack = session.start_trial(&start(Modality::Haptic)).unwrap();
    assert!(matches!(ack, ServerMessage::TrialStarted { trial_id: 2, .. }));
}

#[test]
fn invalid_trial_is_rejected() {
    let mut session = Session::new(SimConfig::default());
    let bad = StartTrial {
        fixture_depth: Some(0.01),
        ..start(Modality::Haptic)
    };
    assert!(matches!(session.start_trial(&bad), Err(SessionError::InvalidTrial(_))));
    assert!(!session.is_active());
}

#[test]
fn random_depth_is_seeded_and_in_range() {
    let config = SimConfig::default();
    let request = StartTrial {
        fixture_depth: None,
        seed: Some(42),
        ..start(Modality::Haptic)
    };
    let mut depths = Vec::new();
    for _ in 0..2 {
        let mut session = Session::new(config);
        session.start_trial(&request).unwrap();
        session.abort().unwrap();
        depths.push(session.last_finished().unwrap().trial.fixture_depth);
    }
    assert_eq!(depths[0], depths[1]);
    assert!((0.103..=0.143).contains(&depths[0]));
}

#[test]
fn out_of_range_input_is_clamped_and_flagged() {
    let mut session = Session::new(SimConfig::default());
    session.start_trial(&start(Modality::Visual)).unwrap();
    session.advance(1);
    session.handle_input(0.5).unwrap();
    session.advance(1);
    session.handle_input(-0.2).unwrap();
    session.advance(1);
    session.abort().unwrap();
    let finished = session.last_finished().unwrap();
    assert_eq!(finished.inputs, [0.0, 0.07, 0.0]);
    let clamped = finished
        .record
        .events
        .iter()
        .filter(|e| e.kind == EventKind::InputClamped)
        .count();
    assert_eq!(clamped, 2);
}

#[test]
fn silence_holds_the_hand_and_warns_once_per_gap() {
    let mut session = Session::new(SimConfig::default());
    session.start_trial(&start(Modality::Visual)).unwrap();
    session.handle_input(0.005).unwrap();
    session.advance(1500);
    session.handle_input(0.006).unwrap();
    session.advance(500);
    session.advance(1000);
    session.abort().unwrap();
    let finished = session.last_finished().unwrap();
    assert!(finished.inputs[..1500].iter().all(|&z| z == 0.005));
    assert!(finished.inputs[1500..].iter().all(|&z| z == 0.006));
    let stale: Vec<u64> = finished
        .record
        .events
        .iter()
        .filter(|e| e.kind == EventKind::InputStale)
        .map(|e| e.tick)
        .collect();
    assert_eq!(stale, [1000, 2500]);
}

#[test]
fn states_are_broadcast_at_sixty_hertz_in_tick_order() {
    let mut session = Session::new(SimConfig::default());
    session.start_trial(&start(Modality::Haptic)).unwrap();
    let mut times = Vec::new();
    for _ in 0..100 {
        for m in session.advance(10) {
            if let ServerMessage::State { t, .. } = m {
                times.push(t);
            }
        }
    }
    assert_eq!(times.len(), 60);
    assert!(times.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn finished_trials_are_dumped_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = Session::new(SimConfig::default()).with_record_dir(dir.path());
    session.start_trial(&start(Modality::Haptic)).unwrap();
    session.advance(50);
    session.abort().unwrap();
    let text = std::fs::read_to_string(dir.path().join("trial_1.csv")).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.lines().nth(1).unwrap().starts_with("session,1,HF,"));
}
