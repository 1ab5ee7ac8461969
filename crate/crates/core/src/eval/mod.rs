//! Data IO, metrics, held-out prediction and report export.

pub mod io;
pub mod metrics;
pub mod predict;
pub mod report;

pub use io::{
    event_line, load_events, load_vocab, read_events, save_events, write_events, LoadOptions,
};
pub use metrics::{
    adjusted_rand_index, bootstrap_mean_ci, mean, paired_comparison, parameter_errors,
    relative_error, Checkpoint, Comparison, MetricsReport, ParameterErrors,
    RELATIVE_ERROR_DEFINITION,
};
pub use predict::{
    baseline_hawkes_fit, checkpoint, fit_with_checkpoints, next_event_time_loglik, split_index,
};
pub use report::{export_reports, time_grid, topic_intensity, ReportOptions};
