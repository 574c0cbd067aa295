//! Batch experiments: trial planning, (parallel) execution and aggregation.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{HarnessConfig, SimConfig};
use crate::feedback::Modality;
use crate::metrics::{compute_metrics, MetricsError, Summary, TrialMetrics};
use crate::protocol::TrialOutcome;
use crate::trial::{round_sig9, run_trial, Perturbation, TrialConfig, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Modality comparison, no delay.
    Exp1,
    /// Fixture jumps deeper together with the beep.
    Exp2,
    /// Exp1 with a feedback-path delay.
    Exp3,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Exp1 => "exp1",
            ExperimentKind::Exp2 => "exp2",
            ExperimentKind::Exp3 => "exp3",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp1" => Ok(ExperimentKind::Exp1),
            "exp2" => Ok(ExperimentKind::Exp2),
            "exp3" => Ok(ExperimentKind::Exp3),
            other => Err(format!("unknown experiment `{other}` (expected exp1, exp2 or exp3)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub kind: ExperimentKind,
    pub modalities: Vec<Modality>,
    pub repetitions: usize,
    pub seed: u64,
    /// Overrides the experiment's default feedback delay.
    pub feedback_delay_ms: Option<f64>,
    pub parallel: bool,
}

impl ExperimentOptions {
    pub fn new(kind: ExperimentKind, config: &SimConfig) -> Self {
        Self {
            kind,
            modalities: Modality::ALL.to_vec(),
            repetitions: config.harness.repetitions,
            seed: config.harness.seed,
            feedback_delay_ms: None,
            parallel: true,
        }
    }

    pub fn effective_delay_ms(&self, config: &SimConfig) -> f64 {
        self.feedback_delay_ms.unwrap_or(match self.kind {
            ExperimentKind::Exp1 | ExperimentKind::Exp2 => config.loop_config.feedback_delay_ms,
            ExperimentKind::Exp3 => config.harness.exp3_delay_ms,
        })
    }
}

/// Fixture depth of a trial: uniform in the configured range, determined by
/// the trial seed.
pub fn draw_fixture_depth(harness: &HarnessConfig, seed: u64) -> f64 {
    let depth = if harness.fixture_depth_max > harness.fixture_depth_min {
        ChaCha8Rng::seed_from_u64(seed).random_range(harness.fixture_depth_min..harness.fixture_depth_max)
    } else {
        harness.fixture_depth_min
    };
    round_sig9(depth)
}

/// Lays out `repetitions x modalities` trials in a seeded random order, each
/// with its own seed and a fixture depth drawn uniformly from the configured
/// range.
pub fn plan_trials(config: &SimConfig, options: &ExperimentOptions) -> Vec<TrialConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut schedule: Vec<Modality> = (0..options.repetitions)
        .flat_map(|_| options.modalities.iter().copied())
        .collect();
    schedule.shuffle(&mut rng);

    let delay = options.effective_delay_ms(config);
    let harness = &config.harness;
    schedule
        .into_iter()
        .enumerate()
        .map(|(trial_index, modality)| {
            let seed = rng.next_u64();
            let fixture_depth = draw_fixture_depth(harness, seed);
            let perturbation = (options.kind == ExperimentKind::Exp2).then(|| Perturbation {
                new_depth: round_sig9(fixture_depth + harness.perturbation_offset),
            });
            TrialConfig {
                trial_index,
                modality,
                fixture_depth,
                feedback_delay_ms: delay,
                perturbation,
                seed,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub repetitions: usize,
    pub feedback_delay_ms: f64,
    pub records: Vec<TrialRecord>,
}

pub fn run_experiment(config: &SimConfig, options: &ExperimentOptions) -> ExperimentReport {
    let plan = plan_trials(config, options);
    let name = options.kind.name();
    let records: Vec<TrialRecord> = if options.parallel {
        plan.par_iter().map(|t| run_trial(config, t, name)).collect()
    } else {
        plan.iter().map(|t| run_trial(config, t, name)).collect()
    };
    ExperimentReport {
        kind: options.kind,
        seed: options.seed,
        repetitions: options.repetitions,
        feedback_delay_ms: options.effective_delay_ms(config),
        records,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub modality: Modality,
    pub seed: u64,
    pub fixture_depth: f64,
    pub outcome: TrialOutcome,
    pub metrics: Option<TrialMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityAggregate {
    pub modality: Modality,
    pub trials: usize,
    pub completed: usize,
    pub timeouts: usize,
    pub failed: usize,
    pub avg_penetration: Summary,
    pub max_penetration: Summary,
    pub completion_time: Summary,
    pub delta_p: Summary,
    pub oscillation_peaks: Summary,
    pub oscillation_amplitude: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub repetitions: usize,
    pub feedback_delay_ms: f64,
    pub trial_count: usize,
    pub modalities: Vec<ModalityAggregate>,
    pub trials: Vec<TrialSummary>,
}

impl ExperimentReport {
    pub fn metrics(&self) -> Vec<Result<TrialMetrics, MetricsError>> {
        self.records.iter().map(compute_metrics).collect()
    }

    pub fn aggregates(&self) -> Aggregates {
        aggregate(
            self.kind,
            self.seed,
            self.repetitions,
            self.feedback_delay_ms,
            &self.records,
        )
    }
}

/// Per-trial metrics and per-modality mean/SD for a set of records.
pub fn aggregate(
    kind: ExperimentKind,
    seed: u64,
    repetitions: usize,
    feedback_delay_ms: f64,
    records: &[TrialRecord],
) -> Aggregates {
    let trials: Vec<TrialSummary> = records
        .iter()
        .map(|r| {
            let metrics = compute_metrics(r);
            TrialSummary {
                trial: r.meta.trial_index,
                modality: r.meta.modality,
                seed: r.meta.seed,
                fixture_depth: r.meta.fixture_depth,
                outcome: r.outcome,
                error: metrics.as_ref().err().map(ToString::to_string),
                metrics: metrics.ok(),
            }
        })
        .collect();

    let modalities = Modality::ALL
        .iter()
        .filter(|m| trials.iter().any(|t| t.modality == **m))
        .map(|&modality| {
            let of_mod: Vec<&TrialSummary> = trials.iter().filter(|t| t.modality == modality).collect();
            let ms: Vec<&TrialMetrics> = of_mod.iter().filter_map(|t| t.metrics.as_ref()).collect();
            let collect = |f: &dyn Fn(&TrialMetrics) -> Option<f64>| -> Summary {
                Summary::of(&ms.iter().filter_map(|m| f(m)).collect::<Vec<_>>())
            };
            ModalityAggregate {
                modality,
                trials: of_mod.len(),
                completed: of_mod.iter().filter(|t| t.outcome == TrialOutcome::Completed).count(),
                timeouts: of_mod.iter().filter(|t| t.outcome == TrialOutcome::Timeout).count(),
                failed: of_mod
                    .iter()
                    .filter(|t| t.metrics.is_none() || t.outcome == TrialOutcome::NonFinite)
                    .count(),
                avg_penetration: collect(&|m| Some(m.avg_penetration)),
                max_penetration: collect(&|m| Some(m.max_penetration)),
                completion_time: collect(&|m| m.completion_time),
                delta_p: collect(&|m| m.delta_p),
                oscillation_peaks: collect(&|m| Some(m.oscillation_peaks as f64)),
                oscillation_amplitude: collect(&|m| Some(m.oscillation_amplitude)),
            }
        })
        .collect();

    Aggregates {
        experiment: kind,
        seed,
        repetitions,
        feedback_delay_ms,
        trial_count: records.len(),
        modalities,
        trials,
    }
}
