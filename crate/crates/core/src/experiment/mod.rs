//! Dataset ingestion, bound-evolution runs and the command-line front end.

pub mod checks;
pub mod cli;
pub mod dataset;
pub mod plot;
pub mod report;
pub mod run;

pub use dataset::{
    load_dataset, load_time_series, parse_time_series, save_time_series, synthetic_actuator, synthetic_sine,
    time_series_to_string, Normalization, TimeSeries,
};
pub use cli::cli_dispatch;
pub use plot::{render_svg, sparkline};
pub use report::{bound_report, render_report, BoundReport, ReportRow};
pub use run::{
    curve_summary, empirical_side, experiment_dataset, obtain_model, read_curve_csv, run_bound_evolution,
    write_curve_csv, BoundEvolution, CurveRecord, EmpiricalSide, ExperimentConfig, OutputFiles, TrainSummary,
    CSV_COLUMNS,
};
