//! Configuration, energy sweeps and file output on top of `dotscatter-core`.

pub mod config;
pub mod dump;
pub mod error;
pub mod setup;
pub mod spectrum;
pub mod sweep;

pub use config::SweepConfig;
pub use error::{CliError, Result};
pub use setup::{Point, PreparedSystem};
pub use sweep::{run_sweep, Row, Status, SweepResult};
