//! Slow fading: all rounds of a cycle see the first-round SNR.

use super::ErrorCascade;
use crate::amc::{integrate_region, DecisionRegions, ThroughputEstimate};
use crate::coding::{CombiningType, McsTable};
use crate::error::{domain, Result};

/// `f_{k,l}(snr) = PER_l(h^-1(k h(snr)))` for `k = 0..=K`.
pub fn slow_cascade(
    l: usize,
    snr: f64,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
) -> Result<ErrorCascade> {
    table.check_index(l)?;
    if snr < 0.0 || snr.is_nan() {
        return domain(format!("SNR must be non-negative, got {snr}"));
    }
    if max_rounds == 0 {
        return domain("at least one round is required");
    }
    let f: Vec<f64> = (1..=max_rounds)
        .map(|k| table.per_at(l, combining.repeated(snr, k)))
        .collect();
    ErrorCascade::from_failures(&f)
}

#[inline]
pub(crate) fn slow_eta(l: usize, snr: f64, max_rounds: usize, combining: CombiningType, table: &McsTable) -> f64 {
    let mut rounds = 1.0;
    let mut last = 1.0;
    for k in 1..=max_rounds {
        last = table.per_at(l, combining.repeated(snr, k));
        if k < max_rounds {
            rounds += last;
        }
    }
    table.rate(l) * (1.0 - last) / rounds
}

/// `R_l (1 - f_{K,l}) / (1 + sum_{k<K} f_{k,l})` at SNR `snr`.
pub fn slow_throughput_at(
    l: usize,
    snr: f64,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
) -> Result<f64> {
    Ok(slow_cascade(l, snr, max_rounds, combining, table)?.throughput(table.rate(l)))
}

/// SNRs where some `f_{k,l}` has a kink: `h^-1(k h(x)) = th_l`.
pub(crate) fn slow_kinks(l: usize, max_rounds: usize, combining: CombiningType, table: &McsTable) -> Vec<f64> {
    (1..=max_rounds)
        .map(|k| combining.repeated_inverse(table.threshold(l), k))
        .collect()
}

/// Average slow-fading throughput `sum_l int_{D_l} pdf(x) eta_{K,l}(x) dx`.
pub fn slow_throughput(
    regions: &DecisionRegions,
    max_rounds: usize,
    combining: CombiningType,
    table: &McsTable,
    avg_snr: f64,
) -> Result<ThroughputEstimate> {
    if !(avg_snr > 0.0) {
        return domain("average SNR must be positive");
    }
    if max_rounds == 0 {
        return domain("at least one round is required");
    }
    regions.check_table(table)?;
    let mut eta = 0.0;
    for l in 0..table.len() {
        let kinks = slow_kinks(l, max_rounds, combining, table);
        eta += integrate_region(regions, l, avg_snr, 1, &kinks, |x, out| {
            out[0] = slow_eta(l, x, max_rounds, combining, table);
        })?[0];
    }
    Ok(ThroughputEstimate::analytic(eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::{amc_thresholds_exact, amc_throughput};
    use crate::channel::{db_to_linear, SnrStream};
    use crate::coding::Decay;
    use proptest::prelude::*;

    fn table(a: f64) -> McsTable {
        McsTable::uniform(5, 0.75, Decay::from_value(a).unwrap()).unwrap()
    }

    #[test]
    fn first_round_is_per() {
        let t = table(4.0);
        for x in [0.1, 1.0, 5.0, 40.0] {
            let c = slow_cascade(2, x, 3, CombiningType::Ir, &t).unwrap();
            assert_eq!(c.f(0), 1.0);
            assert_eq!(c.f(1), t.per(2, x).unwrap());
        }
    }

    #[test]
    fn rr_two_half_threshold_rounds_fail() {
        let t = table(4.0);
        let th = t.threshold(3);
        let c = slow_cascade(3, th / 2.0, 2, CombiningType::Rr, &t).unwrap();
        assert_eq!(c.f(2), 1.0);
        let ir = slow_cascade(3, 0.3 * th, 2, CombiningType::Ir, &t).unwrap();
        let expected = t.per(3, (1.0 + 0.3 * th).powi(2) - 1.0).unwrap();
        assert!((ir.f(2) - expected).abs() < 1e-14);
    }

    #[test]
    fn single_round_and_error_free_limits() {
        let t = table(4.0);
        for x in [0.5, 3.0, 9.0] {
            let eta = slow_throughput_at(4, x, 1, CombiningType::Rr, &t).unwrap();
            assert!((eta - t.rate(4) * (1.0 - t.per(4, x).unwrap())).abs() < 1e-15);
        }
        let eta = slow_throughput_at(4, 1e6, 4, CombiningType::Ir, &t).unwrap();
        assert!((eta - t.rate(4)).abs() < 1e-12);
    }

    #[test]
    fn single_round_average_is_amc() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        for db in [-10.0, 0.0, 12.0, 30.0] {
            let g = db_to_linear(db);
            let a = amc_throughput(&r, &t, g).unwrap().value;
            let s = slow_throughput(&r, 1, CombiningType::Ir, &t, g).unwrap().value;
            assert!((a - s).abs() < 1e-8);
        }
    }

    #[test]
    fn more_rounds_help_under_slow_fading() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        for c in [CombiningType::Rr, CombiningType::Ir] {
            for db in [-5.0, 5.0, 15.0, 25.0] {
                let g = db_to_linear(db);
                let one = slow_throughput(&r, 1, c, &t, g).unwrap().value;
                let four = slow_throughput(&r, 4, c, &t, g).unwrap().value;
                assert!(four >= one - 1e-12);
            }
        }
    }

    #[test]
    fn matches_monte_carlo_average_over_snr() {
        // the SNR is held for many cycles, so the average is over eta(snr)
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        let g = db_to_linear(8.0);
        let k = 4;
        let eta = slow_throughput(&r, k, CombiningType::Ir, &t, g).unwrap().value;
        let mut s = SnrStream::new(g, 21, 0);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = s.next_snr();
            let v = slow_throughput_at(r.classify(x), x, k, CombiningType::Ir, &t).unwrap();
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - eta).abs() <= 3.0 * se, "mc {mean} analytic {eta} se {se}");
    }

    proptest! {
        #[test]
        fn cascade_is_monotone(l in 0usize..5, x in 0.0f64..200.0, a in 0.3f64..10.0) {
            let t = table(a);
            for c in [CombiningType::Rr, CombiningType::Ir] {
                let cas = slow_cascade(l, x, 6, c, &t).unwrap();
                prop_assert!(cas.is_monotone());
            }
            let rr = slow_cascade(l, x, 6, CombiningType::Rr, &t).unwrap();
            let ir = slow_cascade(l, x, 6, CombiningType::Ir, &t).unwrap();
            for k in 2..=6 {
                prop_assert!(ir.f(k) <= rr.f(k));
            }
        }
    }
}
