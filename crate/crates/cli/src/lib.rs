//! Experiment harness for the `rdciag` solver: config parsing, seeded sweeps,
//! trace files, rate reports and the acceptance checks.

// `!(x > 0.0)` rejects NaN together with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod experiment;
pub mod trace_csv;

pub use checks::{run_checks, CheckContext, CheckOutcome};
pub use config::{parse_config, serialize_config, ConfigError, ConfigErrors, ExperimentConfig};
pub use experiment::{analyze_traces, run_comparison, run_experiment, ExperimentError, Report};
pub use trace_csv::{read_trace_csv, write_trace_csv};
