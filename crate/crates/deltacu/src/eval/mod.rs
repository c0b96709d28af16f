//! Ensemble evaluation of condom-use change estimators: simulated truths
//! with plausibility filters, repeated fits, and error/classification
//! metrics.

mod ensemble;
mod metrics;
mod truth;

pub use ensemble::{
    default_schedule, run_ensemble, EnsembleConfig, EnsembleReport, MethodEstimate,
    MethodReport, ReplicateOutcome, ReplicateResult, ThresholdReport,
};
pub use metrics::{error_metrics, roc_auc, sensitivity_specificity, ErrorMetrics, RocPoint};
pub use truth::{
    generate_truth, simulate_observations, SchedulePoint, Truth, TruthFilters, TruthKind,
};
