//! Command-line orchestration around `multivar-core`: dataset bundles,
//! fitting, Monte Carlo benchmarks and reports.

pub mod benchmark;
pub mod bundle;
pub mod config;
pub mod error;
pub mod fit;
pub mod plot;
pub mod report;
pub mod simulate;

pub use benchmark::{cmd_benchmark, run_benchmark, BenchmarkOutput, MetricsRow};
pub use bundle::{read_bundle, Bundle, Manifest, Truth};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use fit::cmd_fit;
pub use report::cmd_report;
pub use simulate::cmd_simulate;
