//! AMC decision regions and AMC throughput.

use crate::channel::snr_cdf;
use crate::coding::{Decay, McsTable};
use crate::error::{domain, Error, Result};
use crate::numeric::bisect_root;
use crate::quadrature::{breakpoints_within, integrate_pieces, Tolerance};

/// Exponential tail is truncated at `snr = TAIL_U * avg_snr` (mass `e^-50`).
pub(crate) const TAIL_U: f64 = 50.0;

pub(crate) const REGION_TOL: Tolerance = Tolerance::new(1e-13, 1e-11);

/// Half-open SNR interval `[lo, hi)`; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, snr: f64) -> bool {
        snr >= self.lo && snr < self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    ThresholdVector,
    IntervalUnions,
}

/// Per-MCS SNR decision regions partitioning `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRegions {
    /// `D_l = [t_l, t_{l+1})` with `t_0 = 0`, `t_L = inf`. Equal adjacent
    /// thresholds make a region empty.
    Thresholds(Vec<f64>),
    /// Sorted disjoint intervals per MCS.
    Intervals(Vec<Vec<Interval>>),
}

impl DecisionRegions {
    pub fn from_thresholds(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return domain("threshold vector must not be empty");
        }
        if thresholds[0] != 0.0 {
            return domain("first threshold must be 0");
        }
        if thresholds.iter().any(|t| t.is_nan() || *t < 0.0) {
            return domain("thresholds must be non-negative");
        }
        if thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::NonMonotone);
        }
        Ok(DecisionRegions::Thresholds(thresholds))
    }

    pub fn from_intervals(regions: Vec<Vec<Interval>>) -> Result<Self> {
        if regions.is_empty() {
            return domain("at least one region is required");
        }
        let regions: Vec<Vec<Interval>> = regions
            .into_iter()
            .map(|r| {
                let mut r: Vec<Interval> = r.into_iter().filter(|i| !i.is_empty()).collect();
                r.sort_by(|a, b| a.lo.total_cmp(&b.lo));
                r
            })
            .collect();
        let mut all: Vec<Interval> = regions.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut edge = 0.0;
        for i in &all {
            if i.lo != edge {
                return domain(format!("regions do not partition [0, inf): gap or overlap at {edge}"));
            }
            edge = i.hi;
        }
        if edge != f64::INFINITY {
            return domain("regions do not extend to infinity");
        }
        Ok(DecisionRegions::Intervals(regions))
    }

    pub fn kind(&self) -> RegionKind {
        match self {
            DecisionRegions::Thresholds(_) => RegionKind::ThresholdVector,
            DecisionRegions::Intervals(_) => RegionKind::IntervalUnions,
        }
    }

    /// Number of MCS indices covered.
    pub fn len(&self) -> usize {
        match self {
            DecisionRegions::Thresholds(t) => t.len(),
            DecisionRegions::Intervals(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn thresholds(&self) -> Option<&[f64]> {
        match self {
            DecisionRegions::Thresholds(t) => Some(t),
            DecisionRegions::Intervals(_) => None,
        }
    }

    /// Non-empty intervals making up `D_l`.
    pub fn intervals(&self, l: usize) -> Vec<Interval> {
        match self {
            DecisionRegions::Thresholds(t) => {
                let hi = t.get(l + 1).copied().unwrap_or(f64::INFINITY);
                let i = Interval::new(t[l], hi);
                if i.is_empty() {
                    vec![]
                } else {
                    vec![i]
                }
            }
            DecisionRegions::Intervals(r) => r[l].clone(),
        }
    }

    pub fn is_degenerate(&self, l: usize) -> bool {
        self.intervals(l).is_empty()
    }

    /// The MCS whose region contains `snr` (half-open convention).
    pub fn classify(&self, snr: f64) -> usize {
        match self {
            DecisionRegions::Thresholds(t) => t.partition_point(|x| *x <= snr).saturating_sub(1),
            DecisionRegions::Intervals(r) => r
                .iter()
                .position(|ints| ints.iter().any(|i| i.contains(snr)))
                .unwrap_or(0),
        }
    }

    pub(crate) fn check_table(&self, table: &McsTable) -> Result<()> {
        if self.len() != table.len() {
            return Err(Error::LengthMismatch {
                expected: table.len(),
                actual: self.len(),
            });
        }
        Ok(())
    }

    /// `P(SNR in D_l)` in closed form.
    pub fn probability(&self, l: usize, avg_snr: f64) -> f64 {
        self.intervals(l)
            .iter()
            .map(|i| snr_cdf(i.hi, avg_snr) - snr_cdf(i.lo, avg_snr))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    MonteCarlo,
}

/// Throughput in bits/symbol with an optional confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputEstimate {
    pub value: f64,
    pub ci_half_width: Option<f64>,
    pub provenance: Provenance,
}

impl ThroughputEstimate {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            ci_half_width: None,
            provenance: Provenance::Analytic,
        }
    }
}

/// Integrates `pdf(x) g(x)` over the region `D_l` (truncated at
/// `TAIL_U * avg_snr`), splitting at `kinks`. `g` writes `dim` outputs.
pub(crate) fn integrate_region<G>(
    regions: &DecisionRegions,
    l: usize,
    avg_snr: f64,
    dim: usize,
    kinks: &[f64],
    mut g: G,
) -> Result<Vec<f64>>
where
    G: FnMut(f64, &mut [f64]),
{
    let mut total = vec![0.0; dim];
    let u_max = TAIL_U;
    for int in regions.intervals(l) {
        let lo = int.lo / avg_snr;
        let hi = (int.hi / avg_snr).min(u_max);
        if hi <= lo {
            continue;
        }
        let pts = breakpoints_within(lo, hi, refined_breakpoints(lo, hi, kinks.iter().map(|k| k / avg_snr)));
        let v = integrate_pieces(
            |u, out: &mut [f64]| {
                g(u * avg_snr, out);
                let w = (-u).exp();
                for o in out.iter_mut() {
                    *o *= w;
                }
            },
            dim,
            &pts,
            REGION_TOL,
        )?;
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    Ok(total)
}

/// Dyadic breakpoints `a + (hi - a) 2^-j` to the right of `lo` and of every
/// kink, so that features much narrower than the interval are not missed.
pub(crate) fn refined_breakpoints(lo: f64, hi: f64, kinks: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut anchors = vec![lo];
    anchors.extend(kinks.filter(|k| *k > lo && *k < hi));
    let mut pts = Vec::with_capacity(anchors.len() * (REFINE_LEVELS + 1));
    for a in anchors {
        pts.push(a);
        let mut d = hi - a;
        for _ in 0..REFINE_LEVELS {
            d *= 0.5;
            pts.push(a + d);
        }
    }
    pts
}

const REFINE_LEVELS: usize = 24;

/// Optimal AMC thresholds: crossings of consecutive instantaneous throughputs
/// `R_l (1 - PER_l)`. With step decoding these are the decoding thresholds.
pub fn amc_thresholds_exact(table: &McsTable) -> Result<DecisionRegions> {
    let mut t = vec![0.0];
    for l in 1..table.len() {
        let gamma = match table.decay() {
            Decay::Step => table.threshold(l),
            Decay::Finite(_) => {
                let th = table.threshold(l);
                let (r_hi, r_lo) = (table.rate(l), table.rate(l - 1));
                bisect_root(
                    |x| r_hi * (1.0 - table.per_at(l, x)) - r_lo * (1.0 - table.per_at(l - 1, x)),
                    th,
                    1e4 * th,
                    1e-12,
                    0.0,
                )?
            }
        };
        t.push(gamma);
    }
    DecisionRegions::from_thresholds(t).map_err(|_| Error::Domain("rate set yields non-monotone AMC thresholds".into()))
}

/// Closed-form approximation `th_l (1 + ln(R_l / (R_l - R_{l-1})) / a)`.
pub fn amc_thresholds_closed_form(table: &McsTable) -> Result<DecisionRegions> {
    let mut t = vec![0.0];
    for l in 1..table.len() {
        let th = table.threshold(l);
        let gamma = match table.decay() {
            Decay::Step => th,
            Decay::Finite(a) => {
                let (r, r_prev) = (table.rate(l), table.rate(l - 1));
                th * (1.0 + (r / (r - r_prev)).ln() / a)
            }
        };
        t.push(gamma);
    }
    DecisionRegions::from_thresholds(t)
}

/// Thresholds meeting the per-boundary target PER `P_loss^(1/M)`, never
/// below the throughput-optimal thresholds.
pub fn amc_thresholds_per_target(table: &McsTable, p_loss: f64, arq_rounds: u32) -> Result<DecisionRegions> {
    if !(p_loss > 0.0 && p_loss < 1.0) {
        return domain(format!("loss probability must lie in (0,1), got {p_loss}"));
    }
    if arq_rounds == 0 {
        return domain("ARQ rounds must be at least 1");
    }
    let target = p_loss.powf(1.0 / arq_rounds as f64);
    let exact = amc_thresholds_exact(table)?;
    let exact = exact.thresholds().expect("threshold vector");
    let mut t = vec![0.0];
    for (l, &floor) in exact.iter().enumerate().skip(1) {
        let th = table.threshold(l);
        let check = match table.decay() {
            Decay::Step => th,
            Decay::Finite(a) => th * (1.0 + (1.0 / target).ln() / a),
        };
        t.push(check.max(floor));
    }
    DecisionRegions::from_thresholds(t)
}

/// Per-region first-round quantities: `p_l` and `f_{1,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmcRegionTerms {
    pub p: Vec<f64>,
    pub f1: Vec<f64>,
}

pub(crate) fn first_round_terms(regions: &DecisionRegions, table: &McsTable, avg_snr: f64) -> Result<AmcRegionTerms> {
    regions.check_table(table)?;
    let mut p = Vec::with_capacity(table.len());
    let mut f1 = Vec::with_capacity(table.len());
    for l in 0..table.len() {
        let pl = regions.probability(l, avg_snr);
        let err = integrate_region(regions, l, avg_snr, 1, &[table.threshold(l)], |x, out| {
            out[0] = table.per_at(l, x);
        })?[0];
        p.push(pl);
        f1.push(if pl > 0.0 { (err / pl).min(1.0) } else { 0.0 });
    }
    Ok(AmcRegionTerms { p, f1 })
}

/// `sum_l R_l (1 - f_{1,l}) p_l`; identical for fast and slow fading.
pub fn amc_throughput(regions: &DecisionRegions, table: &McsTable, avg_snr: f64) -> Result<ThroughputEstimate> {
    if !(avg_snr > 0.0) {
        return domain("average SNR must be positive");
    }
    let terms = first_round_terms(regions, table, avg_snr)?;
    let eta = (0..table.len())
        .map(|l| table.rate(l) * (1.0 - terms.f1[l]) * terms.p[l])
        .sum();
    Ok(ThroughputEstimate::analytic(eta))
}
