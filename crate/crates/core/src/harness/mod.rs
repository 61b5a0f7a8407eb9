//! Experiment orchestration: configurations and presets, sweeps, operation-count
//! reports and `α` diagnostics, all emitted as CSV.

mod alpha;
mod complexity;
mod config;
mod sweep;

use thiserror::Error;

pub use alpha::{emit_alpha_diagnostics, wiener_alpha, write_alpha_csv, AlphaRow};
pub use complexity::{
    measure, report_complexity, table_order, write_complexity_csv, ComplexityRow, Dims, Measurement, Param,
};
pub use config::{ConfigError, SystemConfig, PRESETS};
pub use sweep::{run_sweep, sweep_header, write_sweep_csv, SweepOptions, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rate(#[from] crate::rate_eval::RateError),
    #[error(transparent)]
    Precode(#[from] crate::precode::PrecodeError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Ofdm(#[from] crate::ofdm::OfdmError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("alpha diagnostics need a qcm or magiq precoder in `precoders`")]
    NoCoordinatePrecoder,
}
