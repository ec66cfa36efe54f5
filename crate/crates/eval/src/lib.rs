//! Evaluation harness: paired mitigation sweeps over SINR and temporal
//! overlap, detection-probability curves, landing runs and report files.

pub mod error;
pub mod landing;
pub mod metrics;
pub mod report;
pub mod sweep;

pub use error::{EvalError, Result};
pub use landing::{landing_scenario, linear_descent, LandingConfig, LandingStep};
pub use metrics::{altitude_rmse, detection_probability, median, spearman};
pub use report::emit_report;
pub use sweep::{run_sweep, CellResult, InterferenceClass, Mitigation, SweepConfig, SweepResult, TrialRecord};
