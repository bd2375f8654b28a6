//! The shipped 17-node medium-voltage benchmark.

use super::{parse_grid, GridModel};

/// Grid description text of the benchmark (solidly grounded neutrals,
/// monitored flags set to the resolution-cost placement).
pub const BENCHMARK_TOML: &str = include_str!("../../data/benchmark17.toml");

/// Quality factor of the Petersen coils used for the compensated variant.
pub const PETERSEN_QUALITY: f64 = 4.0;

pub fn benchmark_grid() -> GridModel {
    parse_grid(BENCHMARK_TOML).expect("shipped benchmark grid is valid")
}

/// Benchmark with both neutrals grounded through tuned Petersen coils.
pub fn benchmark_grid_petersen() -> GridModel {
    benchmark_grid()
        .with_tuned_petersen(PETERSEN_QUALITY)
        .expect("benchmark has grounded neutrals")
}
