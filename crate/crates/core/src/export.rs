//! Output files of a batch run.
//!
//! * `trials.csv`: one row per logged tick of every trial.
//! * `aggregates.json`: per-trial metrics and per-modality mean/SD.
//! * `trajectories_normalized.csv`: per-modality mean/SD of the normalized
//!   needle and surface trajectories on a fixed time grid.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::experiment::ExperimentReport;
use crate::feedback::Modality;
use crate::metrics::{normalize_trajectory, Summary};
use crate::trial::TrialRecord;

pub const TRIALS_CSV: &str = "trials.csv";
pub const AGGREGATES_JSON: &str = "aggregates.json";
pub const TRAJECTORIES_CSV: &str = "trajectories_normalized.csv";

/// Time step of the normalized-trajectory grid, s.
pub const TRAJECTORY_GRID_S: f64 = 0.01;

#[derive(Debug, Serialize)]
struct TrialRow<'a> {
    experiment: &'a str,
    trial: usize,
    modality: &'static str,
    seed: u64,
    feedback_delay_ms: f64,
    outcome: &'static str,
    tick: u64,
    t: f64,
    hand_z: f64,
    needle_z: f64,
    surface_z: f64,
    fixture_depth: f64,
    tissue_force: f64,
    fixture_force: f64,
    phase: &'static str,
    kinesthetic_force: f64,
    index_stress: f64,
    thumb_stress: f64,
    visual_bar: f64,
    target_hand: &'static str,
    intent: &'static str,
    events: String,
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for record in records {
        let mut events = record.events.iter().peekable();
        for s in &record.samples {
            let mut names = Vec::new();
            while let Some(e) = events.next_if(|e| e.tick <= s.tick) {
                names.push(e.kind.as_str());
            }
            writer.serialize(TrialRow {
                experiment: &record.meta.experiment,
                trial: record.meta.trial_index,
                modality: record.meta.modality.code(),
                seed: record.meta.seed,
                feedback_delay_ms: record.meta.feedback_delay_ms,
                outcome: record.outcome.as_str(),
                tick: s.tick,
                t: s.t,
                hand_z: s.hand_z,
                needle_z: s.needle_z,
                surface_z: s.surface_z,
                fixture_depth: s.fixture_depth,
                tissue_force: s.tissue_force,
                fixture_force: s.fixture_force,
                phase: s.phase.as_str(),
                kinesthetic_force: s.kinesthetic_force,
                index_stress: s.index_stress,
                thumb_stress: s.thumb_stress,
                visual_bar: s.visual_bar,
                target_hand: s.target_hand.map_or("", |h| h.as_str()),
                intent: s.intent.map_or("", |i| i.as_str()),
                events: names.join(";"),
            })?;
        }
    }
    writer.flush()
}

#[derive(Debug, Clone, Serialize)]
struct TrajectoryRow {
    modality: &'static str,
    t: f64,
    n: usize,
    needle_pct_mean: f64,
    needle_pct_sd: Option<f64>,
    surface_pct_mean: f64,
    surface_pct_sd: Option<f64>,
}

/// Averages normalized trajectories per modality on a grid anchored at
/// fixture entry. Each trial contributes the sample nearest each grid time.
pub fn write_trajectories_csv<W: Write>(records: &[TrialRecord], surface_rest: f64, out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for modality in Modality::ALL {
        // grid index -> (needle values, surface values)
        let mut grid: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for record in records.iter().filter(|r| r.meta.modality == modality) {
            let Ok(points) = normalize_trajectory(record, surface_rest) else {
                continue;
            };
            let mut last_slot = None;
            for p in points {
                let slot = (p.t / TRAJECTORY_GRID_S).round() as i64;
                if last_slot == Some(slot) {
                    continue;
                }
                last_slot = Some(slot);
                let entry = grid.entry(slot).or_default();
                entry.0.push(p.needle_pct);
                entry.1.push(p.surface_pct);
            }
        }
        for (slot, (needle, surface)) in grid {
            let n = Summary::of(&needle);
            let s = Summary::of(&surface);
            writer.serialize(TrajectoryRow {
                modality: modality.code(),
                t: slot as f64 * TRAJECTORY_GRID_S,
                n: n.n,
                needle_pct_mean: n.mean.unwrap_or(f64::NAN),
                needle_pct_sd: n.sd,
                surface_pct_mean: s.mean.unwrap_or(f64::NAN),
                surface_pct_sd: s.sd,
            })?;
        }
    }
    writer.flush()
}

impl ExperimentReport {
    /// Writes all three output files into `dir`, creating it if needed.
    pub fn write_outputs(&self, dir: impl AsRef<Path>, surface_rest: f64) -> io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_trials_csv(&self.records, BufWriter::new(File::create(dir.join(TRIALS_CSV))?))?;
        let mut json = BufWriter::new(File::create(dir.join(AGGREGATES_JSON))?);
        serde_json::to_writer_pretty(&mut json, &self.aggregates())?;
        json.write_all(b"\n")?;
        json.flush()?;
        write_trajectories_csv(
            &self.records,
            surface_rest,
            BufWriter::new(File::create(dir.join(TRAJECTORIES_CSV))?),
        )
    }
}
