//! Fast fading: independent SNR per round.
//!
//! Given the first-round SNR `x`, round `k` fails with probability
//! `f_{k,l}(x) = E[PER_l(h^-1(h(x) + h(G_2) + ... + h(G_k)))]`.
//! For RR the sum of the later SNRs is Erlang distributed and one quadrature
//! per `x` suffices; for IR the sum of MI values comes from [`IrConvolution`].

use statrs::function::gamma::gamma_lr;

use super::ir::{IrConvolution, DEFAULT_GRID_CELLS};
use crate::amc::{integrate_region, DecisionRegions, ThroughputEstimate};
use crate::coding::{mi, CombiningType, Decay, McsTable};
use crate::error::{domain, Error, Result};
use crate::quadrature::{breakpoints_within, integrate_pieces, Tolerance};

const RR_TOL: Tolerance = Tolerance::new(1e-15, 1e-11);

/// `PER = exp(-a(x/th - 1))` is below `e^-PER_SPAN` past `th (1 + PER_SPAN/a)`.
const PER_SPAN: f64 = 42.0;

#[derive(Debug, Clone)]
struct IrTables {
    conv: IrConvolution,
    /// `per[l][m-1][i]`: expected PER after `m` more rounds at `y = i dv`.
    per: Vec<Vec<Vec<f64>>>,
}

/// Conditional error cascades `f_{k,l}(x)` for one `(table, combining, K, avg)`.
#[derive(Debug, Clone)]
pub struct FastCascade {
    table: McsTable,
    combining: CombiningType,
    max_rounds: usize,
    avg_snr: f64,
    ir: Option<IrTables>,
}

impl FastCascade {
    pub fn new(table: &McsTable, combining: CombiningType, max_rounds: usize, avg_snr: f64) -> Result<Self> {
        Self::with_grid(table, combining, max_rounds, avg_snr, DEFAULT_GRID_CELLS)
    }

    /// As [`FastCascade::new`] with an explicit IR grid size.
    pub fn with_grid(
        table: &McsTable,
        combining: CombiningType,
        max_rounds: usize,
        avg_snr: f64,
        cells: usize,
    ) -> Result<Self> {
        if max_rounds == 0 {
            return domain("at least one round is required");
        }
        if !(avg_snr > 0.0 && avg_snr.is_finite()) {
            return domain(format!("average SNR must be positive, got {avg_snr}"));
        }
        let ir = if combining == CombiningType::Ir && max_rounds > 1 {
            let conv = IrConvolution::build(avg_snr, max_rounds - 1, cells)?;
            let per = (0..table.len())
                .map(|l| (1..max_rounds).map(|m| conv.expected_per_table(table, l, m)).collect())
                .collect();
            Some(IrTables { conv, per })
        } else {
            None
        };
        Ok(Self {
            table: table.clone(),
            combining,
            max_rounds,
            avg_snr,
            ir,
        })
    }

    pub fn table(&self) -> &McsTable {
        &self.table
    }

    pub fn combining(&self) -> CombiningType {
        self.combining
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }

    pub fn avg_snr(&self) -> f64 {
        self.avg_snr
    }

    /// Writes `f_{1,l}(x), ..., f_{K,l}(x)` into `out`.
    pub fn fill(&self, l: usize, x: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.max_rounds {
            return Err(Error::LengthMismatch {
                expected: self.max_rounds,
                actual: out.len(),
            });
        }
        out[0] = self.table.per_at(l, x);
        if self.max_rounds > 1 {
            match &self.ir {
                Some(ir) => ir_tail(ir, &self.table, l, x, &mut out[1..]),
                None => rr_tail(&self.table, l, x, self.avg_snr, &mut out[1..])?,
            }
        }
        // quadrature noise must not break 1 >= f_1 >= ... >= f_K
        for k in 1..out.len() {
            out[k] = out[k].clamp(0.0, out[k - 1]);
        }
        Ok(())
    }

    /// `f_{k,l}(x)` for `1 <= k <= K`.
    pub fn conditional(&self, l: usize, x: f64, k: usize) -> Result<f64> {
        self.table.check_index(l)?;
        if k == 0 || k > self.max_rounds {
            return domain(format!("round {k} outside 1..={}", self.max_rounds));
        }
        if x < 0.0 || x.is_nan() {
            return domain(format!("SNR must be non-negative, got {x}"));
        }
        let mut out = vec![0.0; self.max_rounds];
        self.fill(l, x, &mut out)?;
        Ok(out[k - 1])
    }

    /// Region averages `p_l`, `f_{k,l}` and `T_l` for the given regions.
    pub fn region_quantities(&self, regions: &DecisionRegions) -> Result<RegionQuantities> {
        regions.check_table(&self.table)?;
        let k = self.max_rounds;
        let mut p = Vec::with_capacity(self.table.len());
        let mut f = Vec::with_capacity(self.table.len());
        for l in 0..self.table.len() {
            let pl = regions.probability(l, self.avg_snr);
            let mut failure = None;
            let sums = integrate_region(regions, l, self.avg_snr, k, &[self.table.threshold(l)], |x, out| {
                if let Err(e) = self.fill(l, x, out) {
                    failure.get_or_insert(e);
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            let fl: Vec<f64> = if pl > 0.0 {
                sums.iter().map(|s| (s / pl).clamp(0.0, 1.0)).collect()
            } else {
                vec![0.0; k]
            };
            p.push(pl);
            f.push(fl);
        }
        Ok(RegionQuantities::new(p, f))
    }
}

/// `P(Erlang(m, 1) <= t)`.
fn erlang_cdf(m: usize, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        gamma_lr(m as f64, t)
    }
}

/// RR rounds `2..=K`: `out[m-1] = f_{m+1,l}(x)`.
fn rr_tail(table: &McsTable, l: usize, x: f64, avg: f64, out: &mut [f64]) -> Result<()> {
    let th = table.threshold(l);
    let c = (th - x).max(0.0);
    for (i, o) in out.iter_mut().enumerate() {
        *o = erlang_cdf(i + 1, c / avg);
    }
    let a = match table.decay() {
        Decay::Step => return Ok(()),
        Decay::Finite(a) => a,
    };
    let m_max = out.len();
    let s_hi = (c + avg * (60.0 + 4.0 * m_max as f64)).min(th * (1.0 + PER_SPAN / a) - x);
    if s_hi <= c {
        return Ok(());
    }
    let scales = [
        avg,
        4.0 * avg,
        16.0 * avg,
        64.0 * avg,
        th / a,
        4.0 * th / a,
        16.0 * th / a,
    ];
    let pts = breakpoints_within(c, s_hi, scales.iter().map(|d| c + d));
    let tail = integrate_pieces(
        |s, v: &mut [f64]| {
            let per = table.per_at(l, x + s);
            let r = s / avg;
            let mut e = (-r).exp() / avg;
            for (m, slot) in v.iter_mut().enumerate() {
                *slot = per * e;
                e *= r / (m + 1) as f64;
            }
        },
        m_max,
        &pts,
        RR_TOL,
    )?;
    for (o, t) in out.iter_mut().zip(tail) {
        *o += t;
    }
    Ok(())
}

/// IR rounds `2..=K` by interpolation in the precomputed tables.
fn ir_tail(ir: &IrTables, table: &McsTable, l: usize, x: f64, out: &mut [f64]) {
    let y = mi(x);
    let dv = ir.conv.spacing();
    let pos = y / dv;
    let i = pos.floor() as usize;
    for (m, o) in out.iter_mut().enumerate() {
        let tab = &ir.per[l][m];
        *o = if i + 1 < tab.len() {
            let t = pos - i as f64;
            tab[i] * (1.0 - t) + tab[i + 1] * t
        } else {
            ir.conv.expected_per(table, l, m + 1, y)
        };
    }
}

/// Per-region averages of the fast-fading error cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionQuantities {
    /// `p_l = P(SNR in D_l)`.
    pub p: Vec<f64>,
    /// `f[l][k-1] = f_{k,l}`; zero for empty regions.
    pub f: Vec<Vec<f64>>,
    /// `T_l = 1 + sum_{k<K} f_{k,l}`.
    pub mean_rounds: Vec<f64>,
}

impl RegionQuantities {
    pub(crate) fn new(p: Vec<f64>, f: Vec<Vec<f64>>) -> Self {
        let mean_rounds = f
            .iter()
            .map(|fl| 1.0 + fl[..fl.len() - 1].iter().sum::<f64>())
            .collect();
        Self { p, f, mean_rounds }
    }

    /// `sum_l R_l (1 - f_{K,l}) p_l`.
    pub fn reward(&self, table: &McsTable) -> f64 {
        (0..self.p.len())
            .filter(|l| self.p[*l] > 0.0)
            .map(|l| table.rate(l) * (1.0 - self.f[l][self.f[l].len() - 1]) * self.p[l])
            .sum()
    }

    /// `sum_l T_l p_l`.
    pub fn rounds(&self) -> f64 {
        (0..self.p.len())
            .filter(|l| self.p[*l] > 0.0)
            .map(|l| self.mean_rounds[l] * self.p[l])
            .sum()
    }

    pub fn throughput(&self, table: &McsTable) -> f64 {
        self.reward(table) / self.rounds()
    }
}

/// `f_{k,l}(x)` for a single first-round SNR.
pub fn fast_cascade_conditional(
    l: usize,
    x: f64,
    k: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
) -> Result<f64> {
    if k == 0 {
        return domain("round index starts at 1");
    }
    FastCascade::new(table, combining, k, avg_snr)?.conditional(l, x, k)
}

pub fn fast_region_quantities(
    regions: &DecisionRegions,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
) -> Result<RegionQuantities> {
    FastCascade::new(table, combining, max_rounds, avg_snr)?.region_quantities(regions)
}

/// `sum_l R_l (1 - f_{K,l}) p_l / sum_l T_l p_l`.
pub fn fast_throughput(
    regions: &DecisionRegions,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
) -> Result<ThroughputEstimate> {
    let q = fast_region_quantities(regions, max_rounds, combining, table, avg_snr)?;
    Ok(ThroughputEstimate::analytic(q.throughput(table)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::{amc_thresholds_exact, amc_throughput, first_round_terms};
    use crate::channel::{db_to_linear, SnrStream};
    use crate::coding::inverse_mi;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn table(a: f64) -> McsTable {
        McsTable::uniform(5, 0.75, Decay::from_value(a).unwrap()).unwrap()
    }

    /// Closed form of the RR cascade for integer shape `m`.
    fn rr_closed_form(t: &McsTable, l: usize, x: f64, m: usize, avg: f64, a: f64) -> f64 {
        let th = t.threshold(l);
        let c = (th - x).max(0.0);
        let q = |m: usize, z: f64| -> f64 {
            let mut term = 1.0;
            let mut s = 0.0;
            for n in 0..m {
                if n > 0 {
                    term *= z / n as f64;
                }
                s += term;
            }
            (-z).exp() * s
        };
        let beta = a / th + 1.0 / avg;
        (1.0 - q(m, c / avg)) + (-a * (x / th - 1.0)).exp() * (1.0 + a * avg / th).powi(-(m as i32)) * q(m, c * beta)
    }

    #[test]
    fn first_round_is_per() {
        let t = table(4.0);
        for c in [CombiningType::Rr, CombiningType::Ir] {
            let cas = FastCascade::new(&t, c, 1, 3.0).unwrap();
            for x in [0.0, 0.9, 2.0, 20.0] {
                assert_eq!(cas.conditional(1, x, 1).unwrap(), t.per(1, x).unwrap());
            }
        }
    }

    #[test]
    fn rr_matches_closed_form() {
        for a in [0.5, 4.0, 12.0] {
            let t = table(a);
            for avg in [0.05, 1.0, 30.0, 300.0] {
                let cas = FastCascade::new(&t, CombiningType::Rr, 4, avg).unwrap();
                for l in [0, 2, 4] {
                    for x in [0.0, 0.3, t.threshold(l), 2.0 * t.threshold(l), 50.0] {
                        for k in 2..=4 {
                            let got = cas.conditional(l, x, k).unwrap();
                            let want = rr_closed_form(&t, l, x, k - 1, avg, a);
                            assert!(
                                (got - want).abs() < 1e-9,
                                "a={a} avg={avg} l={l} x={x} k={k}: {got} vs {want}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rr_step_is_erlang_cdf() {
        let t = table(f64::INFINITY);
        let cas = FastCascade::new(&t, CombiningType::Rr, 3, 2.0).unwrap();
        let th = t.threshold(3);
        let x = 0.25 * th;
        let z = (th - x) / 2.0;
        assert!((cas.conditional(3, x, 2).unwrap() - (1.0 - (-z).exp())).abs() < 1e-14);
        assert!((cas.conditional(3, x, 3).unwrap() - (1.0 - (-z).exp() * (1.0 + z))).abs() < 1e-14);
    }

    #[test]
    fn rr_two_rounds_match_monte_carlo() {
        let t = table(4.0);
        let avg = db_to_linear(5.0);
        let l = 2;
        let x = 0.6 * t.threshold(l);
        let f = fast_cascade_conditional(l, x, 2, CombiningType::Rr, &t, avg).unwrap();
        let mut s = SnrStream::new(avg, 8, 2);
        let n = 10_000_000;
        let mean = (0..n).map(|_| t.per_at(l, x + s.next_snr())).sum::<f64>() / n as f64;
        // PER values are in [0, 1] so the variance is at most f(1-f)
        let sd = (f * (1.0 - f) / n as f64).sqrt();
        assert!((mean - f).abs() < 3.0 * sd, "{mean} vs {f}");
    }

    #[test]
    fn ir_two_rounds_match_direct_quadrature() {
        for a in [0.5, 4.0] {
            let t = table(a);
            for avg in [0.1, 3.0, 300.0] {
                let cas = FastCascade::new(&t, CombiningType::Ir, 2, avg).unwrap();
                for l in [0, 3, 4] {
                    for x in [0.0, 0.5 * t.threshold(l), 1.1 * t.threshold(l), 3.0 * t.threshold(l)] {
                        // (1 + x)(1 + u) - 1 is the two-round IR aggregate
                        let th = t.threshold(l);
                        let u_th = ((1.0 + th) / (1.0 + x) - 1.0).max(0.0);
                        let oracle = integrate(
                            |u| t.per_at(l, (1.0 + x) * (1.0 + u) - 1.0) * (-u / avg).exp() / avg,
                            &[0.0, u_th, u_th + avg, 80.0 * avg + u_th],
                            Tolerance::new(1e-14, 1e-12),
                        )
                        .unwrap();
                        let got = cas.conditional(l, x, 2).unwrap();
                        assert!(
                            (got - oracle).abs() < 2e-5,
                            "a={a} avg={avg} l={l} x={x}: {got} vs {oracle}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ir_three_rounds_match_monte_carlo() {
        let t = table(4.0);
        let avg = db_to_linear(6.0);
        let l = 4;
        let x = 0.2;
        let f = fast_cascade_conditional(l, x, 3, CombiningType::Ir, &t, avg).unwrap();
        let mut s = SnrStream::new(avg, 4, 9);
        let n = 2_000_000;
        let mean = (0..n)
            .map(|_| t.per_at(l, inverse_mi(mi(x) + mi(s.next_snr()) + mi(s.next_snr()))))
            .sum::<f64>()
            / n as f64;
        let sd = (f * (1.0 - f) / n as f64).sqrt();
        assert!((mean - f).abs() < 3.0 * sd + 1e-5, "{mean} vs {f}");
    }

    #[test]
    fn region_quantities_basics() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        let g = db_to_linear(10.0);
        let amc = first_round_terms(&r, &t, g).unwrap();
        for c in [CombiningType::Rr, CombiningType::Ir] {
            let q = fast_region_quantities(&r, 4, c, &t, g).unwrap();
            assert!((q.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for l in 0..5 {
                assert!((q.f[l][0] - amc.f1[l]).abs() < 1e-12);
                assert!(q.f[l].windows(2).all(|w| w[1] <= w[0]));
            }
            let one = fast_region_quantities(&r, 1, c, &t, g).unwrap();
            assert!(one.mean_rounds.iter().all(|m| *m == 1.0));
        }
    }

    #[test]
    fn single_round_is_amc() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        for db in [-10.0, 5.0, 25.0] {
            let g = db_to_linear(db);
            let h = fast_throughput(&r, 1, CombiningType::Rr, &t, g).unwrap().value;
            let a = amc_throughput(&r, &t, g).unwrap().value;
            assert!((h - a).abs() < 1e-12);
        }
    }

    #[test]
    fn low_snr_limit_is_single_rate() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        let g = db_to_linear(-30.0);
        for c in [CombiningType::Rr, CombiningType::Ir] {
            let q = fast_region_quantities(&r, 4, c, &t, g).unwrap();
            let single = t.rate(0) * (1.0 - q.f[0][3]) / q.mean_rounds[0];
            let eta = fast_throughput(&r, 4, c, &t, g).unwrap().value;
            assert!((eta - single).abs() <= 1e-6 * single.max(1e-300));
        }
    }

    #[test]
    fn degenerate_regions_have_zero_cascade() {
        let t = table(4.0);
        let r = DecisionRegions::from_thresholds(vec![0.0, 1.0, 1.0, 1.0, 6.0]).unwrap();
        let q = fast_region_quantities(&r, 3, CombiningType::Ir, &t, 2.0).unwrap();
        assert_eq!(q.p[1], 0.0);
        assert!(q.f[1].iter().all(|f| *f == 0.0));
        assert!(q.throughput(&t).is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn rr_cascade_is_monotone(l in 0usize..5, x in 0.0f64..40.0, avg_db in -10.0f64..30.0) {
            let t = table(4.0);
            let cas = FastCascade::new(&t, CombiningType::Rr, 5, db_to_linear(avg_db)).unwrap();
            let mut out = vec![0.0; 5];
            cas.fill(l, x, &mut out).unwrap();
            prop_assert!(out[0] <= 1.0);
            prop_assert!(out.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
