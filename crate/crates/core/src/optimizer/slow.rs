//! Slow-fading decision regions: pointwise argmax of the per-SNR throughput.

use crate::amc::{DecisionRegions, Interval};
use crate::channel::db_to_linear;
use crate::coding::{CombiningType, McsTable};
use crate::error::{domain, Error, Result};
use crate::harq_analysis::slow::slow_eta;

pub const SLOW_GRID_MIN_POINTS: usize = 2000;
pub const SLOW_GRID_LO_DB: f64 = -30.0;
pub const SLOW_GRID_HI_DB: f64 = 45.0;

/// Relative width at which a change point counts as located.
const REFINE_TOL: f64 = 1e-6;
const MAX_DEPTH: usize = 80;

/// `points` log-spaced SNRs from `lo_db` to `hi_db` inclusive.
pub fn log_snr_grid(lo_db: f64, hi_db: f64, points: usize) -> Vec<f64> {
    let step = (hi_db - lo_db) / (points.max(2) - 1) as f64;
    (0..points).map(|i| db_to_linear(lo_db + step * i as f64)).collect()
}

/// The default grid spanning the required range.
pub fn default_slow_grid() -> Vec<f64> {
    log_snr_grid(SLOW_GRID_LO_DB, SLOW_GRID_HI_DB, 3001)
}

/// MCS with the largest `eta_{K,l}(snr)`; exact ties go to the larger index
/// except when every throughput is zero, which selects the lowest rate.
fn best_mcs(snr: f64, max_rounds: usize, combining: CombiningType, table: &McsTable) -> usize {
    let mut arg = 0;
    let mut best = slow_eta(0, snr, max_rounds, combining, table);
    for l in 1..table.len() {
        let v = slow_eta(l, snr, max_rounds, combining, table);
        if v >= best && v > 0.0 {
            arg = l;
            best = v;
        }
    }
    arg
}

/// Locates every change of the argmax between `lo` (argmax `a`) and `hi`
/// (argmax `b`), appending `(snr, new_argmax)` pairs in increasing order.
#[allow(clippy::too_many_arguments)]
fn refine(
    lo: f64,
    a: usize,
    hi: f64,
    b: usize,
    depth: usize,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    out: &mut Vec<(f64, usize)>,
) -> Result<()> {
    if hi - lo <= REFINE_TOL * hi {
        out.push((0.5 * (lo + hi), b));
        return Ok(());
    }
    if depth > MAX_DEPTH {
        return Err(Error::GridTooCoarse(format!(
            "change of decision between {lo} and {hi} could not be resolved"
        )));
    }
    let mid = (lo * hi).sqrt().clamp(lo, hi);
    let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
    let m = best_mcs(mid, max_rounds, combining, table);
    if m != a {
        refine(lo, a, mid, m, depth + 1, max_rounds, combining, table, out)?;
    }
    if m != b {
        refine(mid, m, hi, b, depth + 1, max_rounds, combining, table, out)?;
    }
    Ok(())
}

/// Decision regions maximizing the slow-fading throughput at every SNR.
///
/// The grid must be increasing, have at least [`SLOW_GRID_MIN_POINTS`]
/// points and cover `[-30, 45]` dB. Below the first and above the last grid
/// point the decision is extended unchanged.
pub fn slow_optimal_regions(
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    snr_grid: &[f64],
) -> Result<DecisionRegions> {
    if max_rounds == 0 {
        return domain("at least one round is required");
    }
    if snr_grid.len() < SLOW_GRID_MIN_POINTS {
        return Err(Error::GridTooCoarse(format!(
            "{} points given, at least {SLOW_GRID_MIN_POINTS} required",
            snr_grid.len()
        )));
    }
    if snr_grid.iter().any(|x| !(*x > 0.0 && x.is_finite())) || snr_grid.windows(2).any(|w| w[1] <= w[0]) {
        return domain("SNR grid must be positive and strictly increasing");
    }
    let (first, last) = (snr_grid[0], snr_grid[snr_grid.len() - 1]);
    if first > db_to_linear(SLOW_GRID_LO_DB) * (1.0 + 1e-9) || last < db_to_linear(SLOW_GRID_HI_DB) * (1.0 - 1e-9) {
        return Err(Error::GridTooCoarse(format!(
            "grid must span [{SLOW_GRID_LO_DB}, {SLOW_GRID_HI_DB}] dB"
        )));
    }

    let picks: Vec<usize> = snr_grid
        .iter()
        .map(|x| best_mcs(*x, max_rounds, combining, table))
        .collect();
    let mut changes: Vec<(f64, usize)> = Vec::new();
    for i in 1..snr_grid.len() {
        if picks[i] != picks[i - 1] {
            refine(
                snr_grid[i - 1],
                picks[i - 1],
                snr_grid[i],
                picks[i],
                0,
                max_rounds,
                combining,
                table,
                &mut changes,
            )?;
        }
    }

    let mut regions: Vec<Vec<Interval>> = vec![Vec::new(); table.len()];
    let mut start = 0.0;
    let mut current = picks[0];
    for (x, next) in changes {
        if next == current {
            continue;
        }
        regions[current].push(Interval::new(start, x));
        start = x;
        current = next;
    }
    regions[current].push(Interval::new(start, f64::INFINITY));
    for r in regions.iter_mut() {
        // merge touching pieces of the same MCS
        let mut merged: Vec<Interval> = Vec::with_capacity(r.len());
        for i in r.drain(..) {
            match merged.last_mut() {
                Some(m) if m.hi == i.lo => m.hi = i.hi,
                _ => merged.push(i),
            }
        }
        *r = merged;
    }
    DecisionRegions::from_intervals(regions)
}
