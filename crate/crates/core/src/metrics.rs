//! Per-trial accuracy, overshoot, timing and oscillation metrics, plus the
//! normalized trajectories used for plotting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator::Intent;
use crate::protocol::EventKind;
use crate::trial::{TrialRecord, TrialSample};

/// Minimum peak-to-trough excursion, needle space, for an oscillation peak.
pub const OSCILLATION_PROMINENCE: f64 = 5e-4;
/// Length of the window in which oscillation peaks are counted, s.
pub const OSCILLATION_WINDOW_S: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trial record has no `{0}` event")]
    MissingEvent(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Mean penetration over fixture-contact samples up to the beep, m.
    pub avg_penetration: f64,
    /// Largest penetration over the whole trial, m.
    pub max_penetration: f64,
    /// Beep time minus tissue entry time, s. `None` without a beep.
    pub completion_time: Option<f64>,
    /// Post-perturbation peak minus pre-perturbation mean, m. Perturbation trials only.
    pub delta_p: Option<f64>,
    pub oscillation_peaks: usize,
    /// Mean peak-minus-preceding-trough of the counted peaks, m.
    pub oscillation_amplitude: f64,
}

pub fn compute_metrics(record: &TrialRecord) -> Result<TrialMetrics, MetricsError> {
    let first_contact = record
        .first_event(EventKind::FixtureFirstContact)
        .ok_or(MetricsError::MissingEvent("fixture_first_contact"))?
        .tick;
    let beep = record.first_event(EventKind::Beep).map(|e| e.tick);
    let samples = &record.samples;

    let contact_window = samples
        .iter()
        .filter(|s| s.tick >= first_contact && beep.is_none_or(|b| s.tick < b) && s.in_fixture());
    let (sum, count) = contact_window.fold((0.0, 0usize), |(sum, n), s| (sum + s.penetration(), n + 1));
    let avg_penetration = if count > 0 { sum / count as f64 } else { 0.0 };
    let max_penetration = samples.iter().map(TrialSample::penetration).fold(0.0, f64::max);

    let completion_time = match (
        record.first_event(EventKind::TissueEntry),
        record.first_event(EventKind::Beep),
    ) {
        (Some(entry), Some(beep)) => Some(beep.t - entry.t),
        _ => None,
    };

    let delta_p = record
        .first_event(EventKind::Perturbation)
        .map(|pert| delta_penetration(record, pert.tick))
        .transpose()?;

    let (oscillation_peaks, oscillation_amplitude) = oscillation(record, first_contact, beep);

    Ok(TrialMetrics {
        avg_penetration,
        max_penetration,
        completion_time,
        delta_p,
        oscillation_peaks,
        oscillation_amplitude,
    })
}

fn delta_penetration(record: &TrialRecord, perturbation_tick: u64) -> Result<f64, MetricsError> {
    let window_start = record
        .first_event(EventKind::ContinuousContactStart)
        .ok_or(MetricsError::MissingEvent("continuous_contact_start"))?
        .tick;
    let samples = &record.samples;
    let Some(at_perturbation) = samples.iter().find(|s| s.tick == perturbation_tick) else {
        return Ok(0.0);
    };
    let old_depth = at_perturbation.fixture_depth;

    let before: Vec<f64> = samples
        .iter()
        .filter(|s| s.tick >= window_start && s.tick < perturbation_tick)
        .map(|s| (s.needle_z - old_depth).max(0.0))
        .collect();
    let mean_before = if before.is_empty() {
        0.0
    } else {
        before.iter().sum::<f64>() / before.len() as f64
    };
    let peak_after = samples
        .iter()
        .filter(|s| s.tick > perturbation_tick)
        .map(|s| (s.needle_z - old_depth).max(0.0))
        .fold(0.0, f64::max);
    Ok(peak_after - mean_before)
}

fn oscillation(record: &TrialRecord, first_contact: u64, beep: Option<u64>) -> (usize, f64) {
    let samples = &record.samples;
    let onset = samples
        .iter()
        .find(|s| s.intent == Some(Intent::Holding))
        .map(|s| s.tick)
        .unwrap_or(first_contact);
    let Some(onset_t) = samples.iter().find(|s| s.tick == onset).map(|s| s.t) else {
        return (0, 0.0);
    };
    let window: Vec<f64> = samples
        .iter()
        .filter(|s| s.tick >= onset && s.t < onset_t + OSCILLATION_WINDOW_S && beep.is_none_or(|b| s.tick < b))
        .map(TrialSample::penetration)
        .collect();
    let prominences = alternating_peaks(&window, OSCILLATION_PROMINENCE);
    if prominences.is_empty() {
        (0, 0.0)
    } else {
        let mean = prominences.iter().sum::<f64>() / prominences.len() as f64;
        (prominences.len(), mean)
    }
}

/// Zig-zag peak detection. A peak counts once the signal has risen more than
/// `prominence` above the preceding trough and then fallen more than
/// `prominence` below the peak. Returns each counted peak's rise.
pub fn alternating_peaks(signal: &[f64], prominence: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let Some(&first) = signal.first() else {
        return out;
    };
    let mut trough = first;
    let mut peak = first;
    let mut rising = true;
    for &x in &signal[1..] {
        if rising {
            if x > peak {
                peak = x;
            } else if peak - x > prominence {
                if peak - trough > prominence {
                    out.push(peak - trough);
                }
                rising = false;
                trough = x;
            }
        } else if x < trough {
            trough = x;
        } else if x - trough > prominence {
            rising = true;
            peak = x;
        }
    }
    out
}

/// One point of a trajectory rebased on fixture entry and scaled so the rest
/// surface sits at 0 % and the fixture at 100 %.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub t: f64,
    pub needle_pct: f64,
    pub surface_pct: f64,
}

pub fn normalize_depth(z: f64, surface_rest: f64, fixture_depth: f64) -> f64 {
    100.0 * (z - surface_rest) / (fixture_depth - surface_rest)
}

pub fn normalize_trajectory(record: &TrialRecord, surface_rest: f64) -> Result<Vec<NormalizedPoint>, MetricsError> {
    let entry = record
        .first_event(EventKind::FixtureFirstContact)
        .ok_or(MetricsError::MissingEvent("fixture_first_contact"))?;
    let depth = record.meta.fixture_depth;
    Ok(record
        .samples
        .iter()
        .map(|s| NormalizedPoint {
            t: s.t - entry.t,
            needle_pct: normalize_depth(s.needle_z, surface_rest, depth),
            surface_pct: normalize_depth(s.surface_z, surface_rest, depth),
        })
        .collect())
}

/// Sample mean and SD (n - 1 denominator; `None` below two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: None,
                sd: None,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self {
            n,
            mean: Some(mean),
            sd,
        }
    }
}
