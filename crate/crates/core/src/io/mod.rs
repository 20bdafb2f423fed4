//! Run configuration and CSV serialization.

pub mod config;
pub mod csv_io;

pub use config::{ensure_output_dir, load_config, RunConfig, RunConfigFile, DEFAULT_SEED};
pub use csv_io::{
    read_csv_header, read_dataset, read_fit_history, read_reference_csv, read_trial_csv, sidecar_path, trial_columns, write_dataset, write_fit_history,
    write_reference_csv, write_trial_csv, write_turnpike, CsvHeader, TOOL_VERSION,
};
