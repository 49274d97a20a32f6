//! Analytic HARQ throughput under slow and fast block fading.

mod fast;
pub mod ir;
pub(crate) mod slow;

pub use fast::{fast_cascade_conditional, fast_region_quantities, fast_throughput, FastCascade, RegionQuantities};
pub use slow::{slow_cascade, slow_throughput, slow_throughput_at};

use crate::amc::{first_round_terms, integrate_region, refined_breakpoints, DecisionRegions, TAIL_U};
use crate::coding::{CombiningType, McsTable};
use crate::error::{domain, Result};
use crate::quadrature::{breakpoints_within, integrate_pieces};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HarqVariant {
    Plain,
    PacketDrop,
    VariableLength,
}

/// Retransmission protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqConfig {
    pub combining: CombiningType,
    pub max_rounds: usize,
    pub variant: HarqVariant,
    /// Normalized first-transmission lengths, decreasing, largest equal to 1.
    pub lengths_primary: Vec<f64>,
    /// Extra retransmission lengths, all below the smallest primary length.
    pub lengths_aux: Vec<f64>,
}

impl HarqConfig {
    pub fn plain(combining: CombiningType, max_rounds: usize) -> Result<Self> {
        Self::new(combining, max_rounds, HarqVariant::Plain, vec![1.0], vec![])
    }

    pub fn packet_drop(combining: CombiningType, max_rounds: usize) -> Result<Self> {
        Self::new(combining, max_rounds, HarqVariant::PacketDrop, vec![1.0], vec![])
    }

    pub fn variable_length(max_rounds: usize, lengths_primary: Vec<f64>, lengths_aux: Vec<f64>) -> Result<Self> {
        Self::new(
            CombiningType::Ir,
            max_rounds,
            HarqVariant::VariableLength,
            lengths_primary,
            lengths_aux,
        )
    }

    pub fn new(
        combining: CombiningType,
        max_rounds: usize,
        variant: HarqVariant,
        lengths_primary: Vec<f64>,
        lengths_aux: Vec<f64>,
    ) -> Result<Self> {
        if max_rounds == 0 {
            return domain("at least one round is required");
        }
        if lengths_primary.first() != Some(&1.0) {
            return domain("the largest primary length must be 1");
        }
        if lengths_primary.windows(2).any(|w| w[1] >= w[0]) || lengths_primary.iter().any(|l| !(*l > 0.0)) {
            return domain("primary lengths must be positive and strictly decreasing");
        }
        let min_primary = *lengths_primary.last().expect("non-empty");
        if lengths_aux.iter().any(|l| !(*l > 0.0 && *l < min_primary)) {
            return domain("auxiliary lengths must be positive and below every primary length");
        }
        if variant == HarqVariant::VariableLength && combining != CombiningType::Ir {
            return domain("variable-length HARQ requires IR combining");
        }
        Ok(Self {
            combining,
            max_rounds,
            variant,
            lengths_primary,
            lengths_aux,
        })
    }
}

/// Probabilities `f_0 = 1, f_1, ..., f_K` of `k` consecutive decoding errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCascade {
    values: Vec<f64>,
}

impl ErrorCascade {
    /// Builds a cascade from `f_1..f_K`; `f_0 = 1` is prepended.
    pub fn from_failures(failures: &[f64]) -> Result<Self> {
        if failures.is_empty() {
            return domain("a cascade needs at least one round");
        }
        let mut values = Vec::with_capacity(failures.len() + 1);
        values.push(1.0);
        values.extend_from_slice(failures);
        if values.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return domain("cascade values must lie in [0, 1]");
        }
        Ok(Self { values })
    }

    pub fn max_rounds(&self) -> usize {
        self.values.len() - 1
    }

    /// `f_k`, with `f_0 = 1`.
    pub fn f(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `1 + sum_{k<K} f_k`.
    pub fn expected_rounds(&self) -> f64 {
        self.values[..self.values.len() - 1].iter().sum()
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    /// Renewal-reward throughput `R (1 - f_K) / (1 + sum_{k<K} f_k)`.
    pub fn throughput(&self, rate: f64) -> f64 {
        rate * (1.0 - self.values[self.values.len() - 1]) / self.expected_rounds()
    }

    /// The same cascade cut after `rounds` rounds.
    pub fn truncated(&self, rounds: usize) -> Self {
        Self {
            values: self.values[..=rounds.min(self.max_rounds())].to_vec(),
        }
    }
}

/// Throughput of the protocol in which any second round succeeds:
/// `sum_l R_l p_l / (1 + sum_l f_{1,l} p_l)`.
pub fn two_round_bound(regions: &DecisionRegions, table: &McsTable, avg_snr: f64) -> Result<f64> {
    if !(avg_snr > 0.0) {
        return domain("average SNR must be positive");
    }
    let terms = first_round_terms(regions, table, avg_snr)?;
    let reward: f64 = (0..table.len()).map(|l| table.rate(l) * terms.p[l]).sum();
    let f1: f64 = (0..table.len()).map(|l| terms.f1[l] * terms.p[l]).sum();
    Ok(reward / (1.0 + f1))
}

/// Mean rate conditioned on a first-round NACK, computed twice: from the
/// per-region terms and as one integral over all SNRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRate {
    pub from_regions: f64,
    pub direct: f64,
}

pub fn posterior_rate_given_nack(regions: &DecisionRegions, table: &McsTable, avg_snr: f64) -> Result<PosteriorRate> {
    if !(avg_snr > 0.0) {
        return domain("average SNR must be positive");
    }
    regions.check_table(table)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for l in 0..table.len() {
        let v = integrate_region(regions, l, avg_snr, 1, &[table.threshold(l)], |x, out| {
            out[0] = table.per_at(l, x);
        })?[0];
        num += table.rate(l) * v;
        den += v;
    }
    let from_regions = num / den;

    let mut edges: Vec<f64> = table.thresholds().to_vec();
    for l in 0..table.len() {
        for i in regions.intervals(l) {
            edges.push(i.lo);
            edges.push(i.hi);
        }
    }
    let pts = breakpoints_within(
        0.0,
        TAIL_U,
        refined_breakpoints(0.0, TAIL_U, edges.iter().map(|e| e / avg_snr)),
    );
    let v = integrate_pieces(
        |u, out: &mut [f64]| {
            let x = u * avg_snr;
            let l = regions.classify(x);
            let w = (-u).exp() * table.per_at(l, x);
            out[0] = table.rate(l) * w;
            out[1] = w;
        },
        2,
        &pts,
        crate::amc::REGION_TOL,
    )?;
    Ok(PosteriorRate {
        from_regions,
        direct: v[0] / v[1],
    })
}

/// Renewal throughput for a given cascade, exposed for hand-built cascades.
pub fn renewal_throughput(rate: f64, cascade: &ErrorCascade) -> f64 {
    cascade.throughput(rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::{amc_thresholds_exact, amc_throughput};
    use crate::channel::db_to_linear;
    use crate::coding::Decay;

    fn table(a: f64) -> McsTable {
        McsTable::uniform(5, 0.75, Decay::from_value(a).unwrap()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(HarqConfig::plain(CombiningType::Rr, 0).is_err());
        assert!(HarqConfig::variable_length(4, vec![1.0, 0.5], vec![0.25]).is_ok());
        assert!(HarqConfig::variable_length(4, vec![0.5, 1.0], vec![]).is_err());
        assert!(HarqConfig::variable_length(4, vec![1.0, 0.5], vec![0.5]).is_err());
        assert!(HarqConfig::new(CombiningType::Rr, 2, HarqVariant::VariableLength, vec![1.0], vec![]).is_err());
    }

    #[test]
    fn subgeometric_counterexample() {
        let f1: f64 = 0.9;
        let c = ErrorCascade::from_failures(&[f1, 0.5 * f1 * f1, 0.75 * f1.powi(3)]).unwrap();
        let eta2 = c.truncated(2).throughput(1.0);
        let eta3 = c.throughput(1.0);
        // (1 - 0.405)/1.9 against (1 - 0.546750)/2.305
        assert!((eta2 - 0.595 / 1.9).abs() < 1e-12);
        assert!((eta3 - 0.45325 / 2.305).abs() < 1e-12);
        assert!(eta2 > eta3);
    }

    #[test]
    fn bound_dominates_and_falls_below_amc_at_high_snr() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        let g = db_to_linear(25.0);
        let bound = two_round_bound(&r, &t, g).unwrap();
        let amc = amc_throughput(&r, &t, g).unwrap().value;
        assert!(bound < amc);
        for c in [CombiningType::Rr, CombiningType::Ir] {
            for k in 2..=4 {
                let h = fast_throughput(&r, k, c, &t, g).unwrap().value;
                assert!(h <= bound + 1e-12, "K={k} {c:?}: {h} > {bound}");
            }
        }
    }

    #[test]
    fn bound_without_errors_is_mean_rate() {
        let t = table(f64::INFINITY);
        let r = amc_thresholds_exact(&t).unwrap();
        let g = 10.0;
        let mean: f64 = (0..5).map(|l| t.rate(l) * r.probability(l, g)).sum();
        let bound = two_round_bound(&r, &t, g).unwrap();
        // step decoding at the decoding thresholds leaves no first-round errors
        // except in the lowest region
        let p0 = r.probability(0, g);
        let f1 = crate::channel::snr_cdf(t.threshold(0), g) / p0;
        assert!((bound - mean / (1.0 + f1 * p0)).abs() < 1e-12);
    }

    #[test]
    fn posterior_identity_holds() {
        let t = table(4.0);
        let r = amc_thresholds_exact(&t).unwrap();
        for db in [0.0, 15.0, 30.0] {
            let p = posterior_rate_given_nack(&r, &t, db_to_linear(db)).unwrap();
            assert!((p.from_regions - p.direct).abs() < 1e-10, "{p:?}");
            assert!(p.from_regions < t.max_rate());
        }
    }
}
