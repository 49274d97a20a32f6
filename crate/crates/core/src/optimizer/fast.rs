//! Threshold optimization for fast fading by Dinkelbach's method.
//!
//! The throughput `N(gamma)/D(gamma)` is maximized by bisection on `lambda`
//! over the sign of `max_gamma F(gamma, lambda) = N - lambda D`. The inner
//! maximization is cyclic coordinate ascent over the thresholds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tables::CumulativeTables;
use crate::amc::{amc_thresholds_exact, DecisionRegions, ThroughputEstimate};
use crate::coding::{CombiningType, McsTable};
use crate::error::{domain, Error, Result};
use crate::harq_analysis::FastCascade;
use crate::numeric::golden_max;

const LAMBDA_F_TOL: f64 = 1e-8;
const LAMBDA_BRACKET_TOL: f64 = 1e-10;
const KKT_TOL: f64 = 1e-4;
const SCAN_POINTS: usize = 48;
const MAX_SWEEPS: usize = 60;

/// One outer iteration of the bisection on `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachState {
    pub lambda: f64,
    pub gamma: Vec<f64>,
    pub f_value: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct FastOptimizerOptions {
    /// Random monotone starting points per inner maximization.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FastOptimizerOptions {
    fn default() -> Self {
        Self { restarts: 5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct FastOptimum {
    pub regions: DecisionRegions,
    pub throughput: ThroughputEstimate,
    /// Final `lambda` of the bisection.
    pub lambda: f64,
    /// Largest relative stationarity residual over interior thresholds.
    pub kkt_residual: f64,
    /// Set when `kkt_residual` exceeds `1e-4`.
    pub kkt_warning: bool,
    pub trace: Vec<DinkelbachState>,
}

/// Direct evaluation of `F(gamma, lambda) = sum_l R_l p_l (1 - f_{K,l}) - lambda sum_l T_l p_l`.
pub fn fast_f(
    gamma: &[f64],
    lambda: f64,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
) -> Result<f64> {
    let regions = DecisionRegions::from_thresholds(gamma.to_vec())?;
    let q = FastCascade::new(table, combining, max_rounds, avg_snr)?.region_quantities(&regions)?;
    Ok(q.reward(table) - lambda * q.rounds())
}

/// Optimized threshold vector and its throughput with default options.
pub fn fast_optimize_regions(
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
) -> Result<(DecisionRegions, ThroughputEstimate)> {
    let opt = fast_optimize(max_rounds, combining, table, avg_snr, &FastOptimizerOptions::default())?;
    Ok((opt.regions, opt.throughput))
}

pub fn fast_optimize(
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
    options: &FastOptimizerOptions,
) -> Result<FastOptimum> {
    let cascade = FastCascade::new(table, combining, max_rounds, avg_snr)?;
    optimize_with_cascade(&cascade, options)
}

struct Inner<'a> {
    tables: &'a CumulativeTables,
    scale: f64,
    rng: ChaCha8Rng,
    restarts: usize,
}

impl Inner<'_> {
    fn to_tau(&self, x: f64) -> f64 {
        (x / self.scale).asinh()
    }

    fn tau_to_x(&self, t: f64) -> f64 {
        self.scale * t.sinh()
    }

    /// Best position of threshold `l` within `[lo, hi]`, never worse than `current`.
    fn coordinate(&self, l: usize, lo: f64, hi: f64, current: f64, lambda: f64) -> f64 {
        let phi = |x: f64| self.tables.coordinate_value(l, x, lambda);
        let mut best = (current, phi(current));
        for x in [lo, hi] {
            let v = phi(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        if hi <= lo {
            return best.0;
        }
        let (t_lo, t_hi) = (self.to_tau(lo), self.to_tau(hi));
        let step = (t_hi - t_lo) / (SCAN_POINTS - 1) as f64;
        let mut scan_best = (t_lo, f64::NEG_INFINITY);
        for i in 0..SCAN_POINTS {
            let t = t_lo + step * i as f64;
            let v = phi(self.tau_to_x(t).clamp(lo, hi));
            if v > scan_best.1 {
                scan_best = (t, v);
            }
        }
        let a = (scan_best.0 - step).max(t_lo);
        let b = (scan_best.0 + step).min(t_hi);
        let (t, v) = golden_max(
            |t| phi(self.tau_to_x(t).clamp(lo, hi)),
            a,
            b,
            1e-12 * (1.0 + t_hi.abs()),
        );
        if v > best.1 {
            best = (self.tau_to_x(t).clamp(lo, hi), v);
        }
        if scan_best.1 > best.1 {
            best = (self.tau_to_x(scan_best.0).clamp(lo, hi), scan_best.1);
        }
        best.0
    }

    fn ascend(&self, mut gamma: Vec<f64>, lambda: f64) -> (Vec<f64>, f64) {
        let x_max = self.tables.x_max();
        let n = gamma.len();
        let mut value = self.tables.f_value(&gamma, lambda);
        for _ in 0..MAX_SWEEPS {
            for l in 1..n {
                let lo = gamma[l - 1];
                let hi = if l + 1 < n { gamma[l + 1] } else { x_max };
                gamma[l] = self.coordinate(l, lo, hi, gamma[l].clamp(lo, hi), lambda);
            }
            let next = self.tables.f_value(&gamma, lambda);
            let gain = next - value;
            value = next.max(value);
            if gain <= 1e-15 * (1.0 + value.abs()) {
                break;
            }
        }
        (gamma, value)
    }

    /// Exact maximizer of `F` over monotone assignments of whole grid cells.
    fn grid_optimum(&self, lambda: f64) -> Vec<f64> {
        let nodes = self.tables.nodes();
        let cells = nodes.len() - 1;
        let n = self.tables.len();
        let value = |i: usize, l: usize| {
            let (a, b) = self.tables.cell(l, i);
            a - lambda * b
        };
        let mut best: Vec<f64> = (0..n).map(|l| value(0, l)).collect();
        let mut from: Vec<Vec<usize>> = Vec::with_capacity(cells);
        from.push((0..n).collect());
        for i in 1..cells {
            let mut next = vec![0.0; n];
            let mut choice = vec![0; n];
            let mut arg = 0;
            for l in 0..n {
                if best[l] > best[arg] {
                    arg = l;
                }
                next[l] = best[arg] + value(i, l);
                choice[l] = arg;
            }
            best = next;
            from.push(choice);
        }
        let mut l = (0..n).fold(0, |m, l| if best[l] > best[m] { l } else { m });
        let mut assign = vec![0; cells];
        for i in (0..cells).rev() {
            assign[i] = l;
            l = from[i][l];
        }
        (0..n)
            .map(|j| {
                if j == 0 {
                    0.0
                } else {
                    assign
                        .iter()
                        .position(|a| *a >= j)
                        .map_or(self.tables.x_max(), |i| nodes[i])
                }
            })
            .collect()
    }

    fn random_start(&mut self, n: usize) -> Vec<f64> {
        let t_max = self.to_tau(self.tables.x_max());
        let mut taus: Vec<f64> = (1..n).map(|_| self.rng.gen::<f64>() * t_max).collect();
        taus.sort_by(f64::total_cmp);
        let mut g = vec![0.0];
        g.extend(taus.into_iter().map(|t| self.tau_to_x(t)));
        g
    }

    fn maximize(&mut self, lambda: f64, fixed_starts: &[Vec<f64>]) -> (Vec<f64>, f64) {
        let n = self.tables.len();
        let mut starts: Vec<Vec<f64>> = fixed_starts.to_vec();
        starts.push(self.grid_optimum(lambda));
        for _ in 0..self.restarts {
            let s = self.random_start(n);
            starts.push(s);
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in starts {
            let (g, v) = self.ascend(s, lambda);
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((g, v));
            }
        }
        best.expect("at least one start")
    }
}

fn clamp_to_grid(gamma: &[f64], x_max: f64) -> Vec<f64> {
    gamma.iter().map(|g| g.min(x_max)).collect()
}

/// Thresholds at the end of the tabulated range become infinite.
fn finalize(gamma: &[f64], x_max: f64) -> Result<DecisionRegions> {
    let g: Vec<f64> = gamma
        .iter()
        .map(|v| if *v >= x_max { f64::INFINITY } else { *v })
        .collect();
    if g.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::NonMonotone);
    }
    DecisionRegions::from_thresholds(g)
}

pub(crate) fn optimize_with_cascade(cascade: &FastCascade, options: &FastOptimizerOptions) -> Result<FastOptimum> {
    let table = cascade.table();
    let n = table.len();
    if n < 2 {
        let regions = DecisionRegions::from_thresholds(vec![0.0])?;
        let q = cascade.region_quantities(&regions)?;
        return Ok(FastOptimum {
            regions,
            throughput: ThroughputEstimate::analytic(q.throughput(table)),
            lambda: q.throughput(table),
            kkt_residual: 0.0,
            kkt_warning: false,
            trace: vec![],
        });
    }
    let tables = CumulativeTables::build(cascade)?;
    let x_max = tables.x_max();
    let amc = amc_thresholds_exact(table)?;
    let amc_gamma = clamp_to_grid(amc.thresholds().expect("threshold vector"), x_max);
    let mut inner = Inner {
        tables: &tables,
        scale: 1e-2 * table.threshold(0).min(cascade.avg_snr()),
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        restarts: options.restarts,
    };

    let (mut lo, mut hi) = (0.0, table.max_rate());
    let (g0, f0) = inner.maximize(lo, std::slice::from_ref(&amc_gamma));
    let mut trace = Vec::new();
    let mut candidates = vec![amc_gamma.clone(), g0.clone()];
    if !(f0 > 0.0) {
        if f0 < 0.0 || f0.is_nan() {
            return Err(Error::BracketFailure { lambda: lo, value: f0 });
        }
        // no reward is attainable at all; every region choice gives zero
        return finish(cascade, &tables, candidates, 0.0, trace);
    }
    let (g_hi, f_hi) = inner.maximize(hi, std::slice::from_ref(&g0));
    if f_hi >= 0.0 {
        return Err(Error::BracketFailure {
            lambda: hi,
            value: f_hi,
        });
    }
    trace.push(DinkelbachState {
        lambda: lo,
        gamma: g0.clone(),
        f_value: f0,
        bracket: (lo, hi),
    });
    let mut warm = g0;
    let _ = g_hi;
    let mut lambda = lo;
    while hi - lo > LAMBDA_BRACKET_TOL {
        lambda = 0.5 * (lo + hi);
        let (g, f) = inner.maximize(lambda, &[warm.clone(), amc_gamma.clone()]);
        if f > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        trace.push(DinkelbachState {
            lambda,
            gamma: g.clone(),
            f_value: f,
            bracket: (lo, hi),
        });
        warm = g.clone();
        candidates.push(g);
        if f.abs() < LAMBDA_F_TOL {
            break;
        }
    }
    finish(cascade, &tables, candidates, lambda, trace)
}

fn finish(
    cascade: &FastCascade,
    tables: &CumulativeTables,
    candidates: Vec<Vec<f64>>,
    lambda: f64,
    trace: Vec<DinkelbachState>,
) -> Result<FastOptimum> {
    let table = cascade.table();
    let x_max = tables.x_max();
    // the last few candidates are the converged ones; the AMC start is the first
    let mut picks: Vec<&Vec<f64>> = vec![&candidates[0]];
    picks.extend(candidates.iter().rev().take(4));
    let mut best: Option<(DecisionRegions, f64, Vec<f64>)> = None;
    for g in picks {
        let regions = finalize(g, x_max)?;
        let eta = cascade.region_quantities(&regions)?.throughput(table);
        if best.as_ref().is_none_or(|b| eta > b.1) {
            best = Some((regions, eta, g.clone()));
        }
    }
    let (regions, eta, gamma) = best.expect("candidate list is non-empty");
    let kkt_residual = kkt_residual(cascade, &gamma, eta, x_max)?;
    Ok(FastOptimum {
        regions,
        throughput: ThroughputEstimate::analytic(eta),
        lambda,
        kkt_residual,
        kkt_warning: kkt_residual > KKT_TOL,
        trace,
    })
}

/// Relative mismatch of the per-MCS integrands across each interior threshold.
fn kkt_residual(cascade: &FastCascade, gamma: &[f64], lambda: f64, x_max: f64) -> Result<f64> {
    let table = cascade.table();
    let k = cascade.max_rounds();
    let mut buf = vec![0.0; k];
    let mut g = |l: usize, x: f64| -> Result<f64> {
        cascade.fill(l, x, &mut buf)?;
        let t = 1.0 + buf[..k - 1].iter().sum::<f64>();
        Ok(table.rate(l) * (1.0 - buf[k - 1]) - lambda * t)
    };
    let n = gamma.len();
    let mut worst = 0.0f64;
    for l in 1..n {
        let hi = if l + 1 < n { gamma[l + 1] } else { x_max };
        let x = gamma[l];
        // only thresholds with real probability mass on both sides are pinned
        if !(x > gamma[l - 1] && x < hi && x < 20.0 * cascade.avg_snr()) {
            continue;
        }
        let (a, b) = (g(l - 1, x)?, g(l, x)?);
        let scale = a.abs().max(b.abs()).max(1e-12);
        worst = worst.max((a - b).abs() / scale);
    }
    Ok(worst)
}

/// Throughput of the threshold vector `gamma` via the full integration.
pub fn threshold_throughput(cascade: &FastCascade, gamma: &[f64]) -> Result<f64> {
    if gamma.first() != Some(&0.0) {
        return domain("first threshold must be 0");
    }
    let regions = DecisionRegions::from_thresholds(gamma.to_vec())?;
    Ok(cascade.region_quantities(&regions)?.throughput(cascade.table()))
}
