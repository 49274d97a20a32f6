//! Decision-region optimization for AMC combined with HARQ.

mod fast;
mod slow;
mod tables;

pub use fast::{
    fast_f, fast_optimize, fast_optimize_regions, threshold_throughput, DinkelbachState, FastOptimizerOptions,
    FastOptimum,
};
pub use slow::{
    default_slow_grid, log_snr_grid, slow_optimal_regions, SLOW_GRID_HI_DB, SLOW_GRID_LO_DB, SLOW_GRID_MIN_POINTS,
};
