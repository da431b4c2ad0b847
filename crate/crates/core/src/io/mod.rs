//! Configuration, metrics, summaries, plots and the command line.

pub mod audit;
pub mod cli;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod summary;

pub use audit::{run_audit, AuditReport};
pub use cli::cli;
pub use config::{parse_config, ConfigDocument, ConfigError, Diagnostic};
pub use metrics::{read_metrics, write_metrics, MetricsRow};
pub use plot::{plot_curves, Curve, CurveMetric};
pub use summary::{read_summary, validate_summary, write_summary};
