//! Multi-seed experiments: configuration, execution, comma-separated
//! output, comparison of two aggregate files, and the oracle battery entry
//! point.

mod compare;
mod config;
mod run;

pub use compare::{compare, escape_level, first_reaching, moving_average, CompareOptions, Comparison, Metric, WindowRow, NEVER};
pub use config::{EnvName, RunConfig, Setup, KEYS};
pub use run::{
    aggregate, aggregate_csv, load_aggregate, parse_aggregate, run, run_all, run_csv, run_single, AggregateRow, RunOutput,
    AGGREGATE_HEADER, RUN_HEADER,
};

use crate::error::{Error, Result};
use crate::oracle::{random_instance, run_battery, BatteryConfig, InstanceSpec, Report, MAX_PAIRS};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_VAR: &str = "NOC_OUTPUT_DIR";

/// Runs the oracle battery on one random instance per seed.
pub fn oracle_check(spec: &InstanceSpec, seeds: &[u64], cfg: &BatteryConfig) -> Result<Report> {
    let pairs = spec.num_states * spec.num_options;
    if pairs > MAX_PAIRS {
        return Err(Error::InstanceTooLarge { pairs, cap: MAX_PAIRS });
    }
    let (lo, hi) = spec.prob_range;
    for (what, n) in [("states", spec.num_states), ("actions", spec.num_actions), ("options", spec.num_options)] {
        if n == 0 || n as f64 * lo >= 1.0 || (n as f64) * hi < 1.0 {
            return Err(Error::Config(format!("no distribution over {n} {what} has every entry in [{lo}, {hi}]")));
        }
    }
    let instances: Vec<_> = seeds.iter().map(|s| random_instance(spec, *s)).collect();
    run_battery(&instances, cfg)
}
