//! Collaborative spectrum sensing with online expert weighting.

pub mod baselines;
pub mod config;
pub mod detector;
pub mod energy;
pub mod error;
pub mod fdr;
pub mod gamma;
pub mod hedge;
pub mod metrics;
pub mod model;
pub mod perceptron;
pub mod scenario;
pub mod simulator;

pub use config::{Algorithm, Preset, ScenarioConfig};
pub use error::{Error, Result};
pub use metrics::{emit_csv, metric_fractions, MetricsLog};
pub use scenario::{roc_sweep, run_scenario, Scenario};
