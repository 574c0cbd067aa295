//! Deterministic simulator of teleoperated needle insertion into soft tissue
//! guarded by a forbidden-region virtual fixture.
//!
//! The pipeline per tick is
//! hand position → encoder quantization → motion scaling → tissue/fixture
//! physics → delayed feedback path → one of four display modalities.
//! A simulated operator closes the loop for batch experiments; the same
//! [`trial::TrialEngine`] also runs interactive sessions.

pub mod config;
pub mod delay;
pub mod experiment;
pub mod export;
pub mod feedback;
pub mod haptic_loop;
pub mod metrics;
pub mod operator;
pub mod protocol;
pub mod tissue;
pub mod trial;

pub use config::{ConfigError, SimConfig};
pub use experiment::{run_experiment, ExperimentKind, ExperimentOptions, ExperimentReport};
pub use feedback::{FeedbackCommand, Modality};
pub use metrics::{compute_metrics, TrialMetrics};
pub use trial::{run_trial, TrialConfig, TrialRecord};
