//! Command-level entry points: run, split, bench, report.

pub mod config;

pub use config::{ProviderKind, RunConfig};
pub mod run;

pub use run::{cmd_run, RunOutcome, RunReport};
pub mod bench;
pub mod split;

pub use bench::{cmd_bench, cmd_report, BenchReport};
pub use split::{cmd_split, SplitManifest, SplitOptions};
