//! Acceptance property suite shared by the `acceptance` test target and the
//! `verify` CLI subcommand.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::amc::{amc_thresholds_exact, amc_throughput, DecisionRegions};
use crate::channel::{db_to_linear, linear_to_db, ChannelConfig, FadingMode};
use crate::coding::{snr_margin_delta, CombiningType, Decay, McsTable};
use crate::error::Result;
use crate::harq_analysis::{
    fast_throughput, slow_cascade, slow_throughput, slow_throughput_at, two_round_bound, ErrorCascade, HarqConfig,
};
use crate::optimizer::{default_slow_grid, fast_optimize_regions, slow_optimal_regions};
use crate::simulator::{simulate_packet_drop, simulate_plain, simulate_vl};

/// Number of criteria in the suite.
pub const CRITERIA: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Blocks per Monte Carlo run.
    pub mc_blocks: u64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mc_blocks: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Measured values behind the verdict.
    pub detail: String,
    pub elapsed: Duration,
}

impl CriterionReport {
    /// `PASS [ 3] name (1.2 s): detail`.
    pub fn line(&self) -> String {
        format!(
            "{} [{:2}] {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub fn criterion_name(id: usize) -> &'static str {
    match id {
        1 => "SNR margin",
        2 => "AMC boundary PERs",
        3 => "throughput grows with rounds",
        4 => "Monte Carlo agrees with analysis",
        5 => "HARQ wins at low SNR",
        6 => "AMC wins at high SNR",
        7 => "HARQ/AMC crossing points",
        8 => "degenerate regions of the optimized thresholds",
        9 => "packet dropping recovers the AMC throughput",
        10 => "variable-length HARQ beats AMC",
        11 => "AMC gap over the two-round bound grows with L",
        12 => "slow-fading regions are unions of intervals",
        _ => "unknown",
    }
}

fn uniform_table(decay: Decay) -> McsTable {
    McsTable::uniform(5, 0.75, decay).expect("valid rates")
}

/// Runs criterion `id` (1-based).
pub fn run_criterion(id: usize, options: &VerifyOptions) -> CriterionReport {
    let start = Instant::now();
    let mut detail = String::new();
    let outcome = match id {
        1 => snr_margin(&mut detail),
        2 => boundary_pers(&mut detail),
        3 => rounds_property(&mut detail),
        4 => monte_carlo_agreement(options, &mut detail),
        5 => low_snr(&mut detail),
        6 => high_snr(&mut detail),
        7 => crossings(&mut detail),
        8 => degenerate_band(&mut detail),
        9 => packet_drop(options, &mut detail),
        10 => variable_length(options, &mut detail),
        11 => gap_in_l(&mut detail),
        12 => slow_unions(&mut detail),
        _ => Ok(false),
    };
    let passed = match outcome {
        Ok(p) => p,
        Err(e) => {
            let _ = write!(detail, "error: {e}");
            false
        }
    };
    CriterionReport {
        id,
        name: criterion_name(id),
        passed,
        detail: detail.trim_end_matches("; ").to_string(),
        elapsed: start.elapsed(),
    }
}

/// Runs the listed criteria concurrently; reports come back in id order.
pub fn run_criteria(ids: &[usize], options: &VerifyOptions) -> Vec<CriterionReport> {
    let mut reports: Vec<CriterionReport> = ids.par_iter().map(|id| run_criterion(*id, options)).collect();
    reports.sort_by_key(|r| r.id);
    reports
}

pub fn run_all(options: &VerifyOptions) -> Vec<CriterionReport> {
    let ids: Vec<usize> = (1..=CRITERIA).collect();
    run_criteria(&ids, options)
}

fn snr_margin(d: &mut String) -> Result<bool> {
    let a = linear_to_db(snr_margin_delta(1e-2, 4.0)?);
    let b = linear_to_db(snr_margin_delta(1e-2, 0.5)?);
    let _ = write!(d, "delta(4) = {a:.4} dB, delta(0.5) = {b:.4} dB");
    Ok((a - 3.3).abs() <= 0.05 && (b - 10.0).abs() <= 0.15)
}

fn boundary_pers(d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let r = amc_thresholds_exact(&t)?;
    let th = r.thresholds().expect("threshold vector");
    let mut ok = true;
    for (l, &g) in th.iter().enumerate().skip(1) {
        let per = t.per(l, g)?;
        let want = 1.0 / (l + 1) as f64;
        ok &= (per - want).abs() <= 0.01;
        let _ = write!(d, "PER_{}={per:.4}; ", l + 1);
    }
    Ok(ok)
}

fn rounds_property(d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let mut violations = 0;
    for c in [CombiningType::Rr, CombiningType::Ir] {
        for i in 0..50 {
            let snr = db_to_linear(-10.0 + 40.0 * i as f64 / 49.0);
            for l in 0..t.len() {
                let cas = slow_cascade(l, snr, 6, c, &t)?;
                let f = cas.values();
                for k in 1..6 {
                    if f[k + 1] * f[k - 1] > f[k] * f[k] * (1.0 + 1e-12) {
                        violations += 1;
                    }
                }
                for k in 1..6 {
                    let lo = slow_throughput_at(l, snr, k, c, &t)?;
                    let hi = slow_throughput_at(l, snr, k + 1, c, &t)?;
                    if hi < lo * (1.0 - 1e-12) {
                        violations += 1;
                    }
                }
            }
        }
    }
    let f1: f64 = 0.9;
    let cas = ErrorCascade::from_failures(&[f1, 0.5 * f1 * f1, 0.75 * f1.powi(3)])?;
    let (eta2, eta3) = (cas.truncated(2).throughput(1.0), cas.throughput(1.0));
    let _ = write!(
        d,
        "{violations} violations; counterexample eta2={eta2:.4} eta3={eta3:.4}"
    );
    Ok(violations == 0 && eta2 > eta3)
}

/// SNR in dB, scheme index, simulated, CI half-width, analytic.
type McRow = (f64, usize, f64, f64, f64);

fn monte_carlo_agreement(o: &VerifyOptions, d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let r = amc_thresholds_exact(&t)?;
    let cases: Vec<(f64, usize)> = [-5.0, 5.0, 15.0]
        .iter()
        .flat_map(|db| (0..3).map(move |s| (*db, s)))
        .collect();
    let rows: Vec<Result<McRow>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (db, scheme))| {
            let g = db_to_linear(*db);
            let seed = o.seed.wrapping_add(i as u64);
            let (sim, analytic) = match scheme {
                0 => {
                    let ch = ChannelConfig::new(g, FadingMode::Fast, seed)?;
                    let h = HarqConfig::plain(CombiningType::Ir, 1)?;
                    (
                        simulate_plain(&r, &h, &t, &ch, o.mc_blocks)?,
                        amc_throughput(&r, &t, g)?.value,
                    )
                }
                1 => {
                    let ch = ChannelConfig::new(g, FadingMode::Slow, seed)?;
                    let h = HarqConfig::plain(CombiningType::Ir, 4)?;
                    let a = slow_throughput(&r, 4, CombiningType::Ir, &t, g)?.value;
                    (simulate_plain(&r, &h, &t, &ch, o.mc_blocks)?, a)
                }
                _ => {
                    let ch = ChannelConfig::new(g, FadingMode::Fast, seed)?;
                    let h = HarqConfig::plain(CombiningType::Rr, 4)?;
                    let a = fast_throughput(&r, 4, CombiningType::Rr, &t, g)?.value;
                    (simulate_plain(&r, &h, &t, &ch, o.mc_blocks)?, a)
                }
            };
            Ok((*db, *scheme, sim.throughput, sim.ci_half_width, analytic))
        })
        .collect();
    let mut ok = true;
    for row in rows {
        let (db, scheme, mc, ci, a) = row?;
        let name = ["amc", "slow-ir", "fast-rr"][scheme];
        let hit = (mc - a).abs() <= ci;
        ok &= hit;
        let _ = write!(d, "{name}@{db}dB {:.2}ci; ", (mc - a).abs() / ci.max(f64::MIN_POSITIVE));
    }
    Ok(ok)
}

fn low_snr(d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let r = amc_thresholds_exact(&t)?;
    let g = db_to_linear(-10.0);
    let amc = amc_throughput(&r, &t, g)?.value;
    let mut ok = true;
    for c in [CombiningType::Rr, CombiningType::Ir] {
        let h = fast_throughput(&r, 4, c, &t, g)?.value;
        ok &= h >= amc;
        let _ = write!(d, "{}={h:.6e}; ", c.name());
    }
    let _ = write!(d, "amc={amc:.6e}");
    Ok(ok)
}

fn high_snr(d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let amc_r = amc_thresholds_exact(&t)?;
    let g = db_to_linear(25.0);
    let amc = amc_throughput(&amc_r, &t, g)?.value;
    let _ = write!(d, "amc={amc:.5}; ");
    let mut ok = true;
    for c in [CombiningType::Rr, CombiningType::Ir] {
        let (opt, _) = fast_optimize_regions(4, c, &t, g)?;
        for (label, r) in [("amc-regions", &amc_r), ("optimized", &opt)] {
            let bound = two_round_bound(r, &t, g)?;
            let h = fast_throughput(r, 4, c, &t, g)?.value;
            ok &= amc > bound && bound >= h;
            let _ = write!(d, "{} {label}: bound={bound:.5} harq={h:.5}; ", c.name());
        }
    }
    Ok(ok)
}

/// First SNR (dB) where HARQ falls below AMC, by linear interpolation on a
/// 0.25 dB sweep over `[-5, 15]` dB. HARQ uses the AMC regions, or the
/// optimized thresholds when `optimized` is set.
pub fn crossing_db(combining: CombiningType, table: &McsTable, optimized: bool) -> Result<Option<f64>> {
    let r = amc_thresholds_exact(table)?;
    let grid: Vec<f64> = (0..=80).map(|i| -5.0 + 0.25 * i as f64).collect();
    let diffs: Vec<Result<f64>> = grid
        .par_iter()
        .map(|db| {
            let g = db_to_linear(*db);
            let harq = if optimized {
                fast_optimize_regions(4, combining, table, g)?.1.value
            } else {
                fast_throughput(&r, 4, combining, table, g)?.value
            };
            Ok(harq - amc_throughput(&r, table, g)?.value)
        })
        .collect();
    let diffs: Vec<f64> = diffs.into_iter().collect::<Result<_>>()?;
    for i in 1..grid.len() {
        if diffs[i - 1] >= 0.0 && diffs[i] < 0.0 {
            let w = diffs[i - 1] / (diffs[i - 1] - diffs[i]);
            return Ok(Some(grid[i - 1] + w * (grid[i] - grid[i - 1])));
        }
    }
    Ok(None)
}

/// The break-points are those of the optimized-threshold curves; the
/// crossings with AMC regions are reported alongside.
fn crossings(d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let mut ok = true;
    for (c, want) in [(CombiningType::Rr, 3.0), (CombiningType::Ir, 9.0)] {
        let show = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.2} dB"));
        let opt = crossing_db(c, &t, true)?;
        let plain = crossing_db(c, &t, false)?;
        ok &= opt.is_some_and(|x| (x - want).abs() <= 1.5);
        let _ = write!(
            d,
            "{} optimized crosses at {} (expected {want}), AMC regions at {}; ",
            c.name(),
            show(opt),
            show(plain)
        );
    }
    Ok(ok)
}

fn degenerate_band(d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let mut ok = true;
    for (db, want) in [(5.0, vec![4]), (25.0, vec![0, 1, 2, 3, 4])] {
        let (r, _) = fast_optimize_regions(4, CombiningType::Ir, &t, db_to_linear(db))?;
        let live: Vec<usize> = (0..t.len()).filter(|l| !r.is_degenerate(*l)).collect();
        let th: Vec<String> = r
            .thresholds()
            .expect("threshold vector")
            .iter()
            .map(|x| format!("{:.2}", linear_to_db(*x)))
            .collect();
        ok &= live == want;
        let _ = write!(
            d,
            "{db} dB: non-degenerate {:?} thresholds [{}] dB; ",
            live.iter().map(|l| l + 1).collect::<Vec<_>>(),
            th.join(", ")
        );
    }
    Ok(ok)
}

fn packet_drop(o: &VerifyOptions, d: &mut String) -> Result<bool> {
    let t = uniform_table(Decay::Finite(4.0));
    let r = amc_thresholds_exact(&t)?;
    let cases: Vec<(CombiningType, f64)> = [CombiningType::Rr, CombiningType::Ir]
        .iter()
        .flat_map(|c| [12.0, 16.0, 20.0, 24.0].map(|db| (*c, db)))
        .collect();
    let rows: Vec<Result<(bool, String)>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (c, db))| {
            let g = db_to_linear(*db);
            let ch = ChannelConfig::new(g, FadingMode::Fast, o.seed.wrapping_add(100 + i as u64))?;
            let sim = simulate_packet_drop(&r, &HarqConfig::packet_drop(*c, 4)?, &t, &ch, o.mc_blocks)?;
            let amc = amc_throughput(&r, &t, g)?.value;
            let ok = sim.throughput >= amc - (0.02 + sim.ci_half_width);
            Ok((ok, format!("{}@{db}dB {:.4}-{:.4}; ", c.name(), sim.throughput, amc)))
        })
        .collect();
    let mut ok = true;
    for row in rows {
        let (hit, s) = row?;
        ok &= hit;
        d.push_str(&s);
    }
    Ok(ok)
}

/// The variable-length setup: first lengths `1/n`, `n = 1..=5`, with rates
/// `0.75 / len` and auxiliary lengths 1/8, 1/12, 1/16.
pub fn vl_setup(decay: Decay, max_rounds: usize) -> Result<(HarqConfig, McsTable)> {
    let primary: Vec<f64> = (1..=5).map(|n| 1.0 / n as f64).collect();
    let table = McsTable::new(primary.iter().map(|l| 0.75 / l).collect(), decay)?;
    let harq = HarqConfig::variable_length(max_rounds, primary, vec![1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0])?;
    Ok((harq, table))
}

fn variable_length(o: &VerifyOptions, d: &mut String) -> Result<bool> {
    let (h, t) = vl_setup(Decay::Finite(4.0), 4)?;
    let g = db_to_linear(20.0);
    let ch = ChannelConfig::new(g, FadingMode::Fast, o.seed.wrapping_add(200))?;
    let sim = simulate_vl(&h, &t, &ch, o.mc_blocks)?;
    let amc = amc_throughput(&amc_thresholds_exact(&t)?, &t, g)?.value;
    let _ = write!(d, "vl={:.4} (+-{:.4}) amc={amc:.4}", sim.throughput, sim.ci_half_width);
    Ok(sim.throughput > amc + sim.ci_half_width)
}

fn gap_in_l(d: &mut String) -> Result<bool> {
    let mut ok = true;
    for db in [15.0, 20.0, 25.0] {
        let g = db_to_linear(db);
        let mut last = f64::NEG_INFINITY;
        let _ = write!(d, "{db} dB:");
        for l in [2usize, 3, 5] {
            let rates: Vec<f64> = (0..l).map(|i| 0.75 + 3.0 * i as f64 / (l - 1) as f64).collect();
            let t = McsTable::new(rates, Decay::Step)?;
            let r = amc_thresholds_exact(&t)?;
            let gap = amc_throughput(&r, &t, g)?.value - two_round_bound(&r, &t, g)?;
            ok &= gap >= last;
            last = gap;
            let _ = write!(d, " L={l} {gap:.4}");
        }
        d.push_str("; ");
    }
    Ok(ok)
}

fn slow_unions(d: &mut String) -> Result<bool> {
    let t = McsTable::new(vec![3.0, 3.75], Decay::Finite(4.0))?;
    let r = slow_optimal_regions(4, CombiningType::Ir, &t, &default_slow_grid())?;
    let amc = amc_thresholds_exact(&t)?;
    let pieces = [r.intervals(0).len(), r.intervals(1).len()];
    let mut ok = pieces.iter().any(|n| *n >= 2);
    let mut worst = f64::INFINITY;
    for i in 0..=150 {
        let g = db_to_linear(-30.0 + 0.5 * i as f64);
        let a = slow_throughput(&r, 4, CombiningType::Ir, &t, g)?.value;
        let b = slow_throughput(&amc, 4, CombiningType::Ir, &t, g)?.value;
        worst = worst.min(a - b);
    }
    ok &= worst >= 0.0;
    let _ = write!(
        d,
        "interval counts {pieces:?}; min gain over AMC regions {worst:.3e}; {}",
        describe(&r)
    );
    Ok(ok)
}

fn describe(r: &DecisionRegions) -> String {
    (0..r.len())
        .map(|l| {
            r.intervals(l)
                .iter()
                .map(|i| format!("{:.2}..{:.2}", linear_to_db(i.lo), linear_to_db(i.hi)))
                .collect::<Vec<_>>()
                .join(";")
        })
        .collect::<Vec<_>>()
        .join(" | ")
}
