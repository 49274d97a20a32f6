//! Decoding-error model: MCS table, PER curve, mutual information and the
//! aggregate SNR of combined HARQ rounds.

use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};

/// Decay of the PER curve above the decoding threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `PER(snr) = exp(-a (snr/th - 1))` above the threshold.
    Finite(f64),
    /// Threshold decoding: error iff `snr < th`.
    Step,
}

impl Decay {
    /// Parses a decay value where `inf` (or `∞`) selects step decoding.
    pub fn from_value(a: f64) -> Result<Self> {
        if a == f64::INFINITY {
            Ok(Decay::Step)
        } else if a > 0.0 && a.is_finite() {
            Ok(Decay::Finite(a))
        } else {
            domain(format!("decay must be positive, got {a}"))
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Decay::Finite(a) => *a,
            Decay::Step => f64::INFINITY,
        }
    }
}

/// Rate set, decoding thresholds and common PER decay.
///
/// MCS indices are zero-based: index `l` refers to the `(l+1)`-th rate.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    rates: Vec<f64>,
    thresholds: Vec<f64>,
    decay: Decay,
}

impl McsTable {
    pub fn new(rates: Vec<f64>, decay: Decay) -> Result<Self> {
        if rates.is_empty() {
            return domain("rate set must not be empty");
        }
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return domain("rates must be positive and finite");
        }
        if rates.windows(2).any(|w| w[1] <= w[0]) {
            return domain("rates must be strictly increasing");
        }
        if let Decay::Finite(a) = decay {
            if !(a > 0.0 && a.is_finite()) {
                return domain(format!("decay must be positive, got {a}"));
            }
        }
        let thresholds = rates.iter().map(|r| inverse_mi(*r)).collect();
        Ok(Self {
            rates,
            thresholds,
            decay,
        })
    }

    /// `count` rates `step, 2 step, ..., count step`.
    pub fn uniform(count: usize, step: f64, decay: Decay) -> Result<Self> {
        Self::new((1..=count).map(|l| l as f64 * step).collect(), decay)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn decay(&self) -> Decay {
        self.decay
    }

    pub fn rate(&self, l: usize) -> f64 {
        self.rates[l]
    }

    pub fn threshold(&self, l: usize) -> f64 {
        self.thresholds[l]
    }

    pub fn max_rate(&self) -> f64 {
        *self.rates.last().expect("non-empty table")
    }

    pub(crate) fn check_index(&self, l: usize) -> Result<()> {
        if l < self.rates.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: l,
                len: self.rates.len(),
            })
        }
    }

    /// Packet error rate of MCS `l` at linear SNR `snr`.
    pub fn per(&self, l: usize, snr: f64) -> Result<f64> {
        self.check_index(l)?;
        if snr < 0.0 || snr.is_nan() {
            return domain(format!("SNR must be non-negative, got {snr}"));
        }
        Ok(self.per_at(l, snr))
    }

    #[inline]
    pub(crate) fn per_at(&self, l: usize, snr: f64) -> f64 {
        let th = self.thresholds[l];
        if snr < th {
            return 1.0;
        }
        match self.decay {
            Decay::Finite(a) => (-a * (snr / th - 1.0)).exp(),
            Decay::Step => 0.0,
        }
    }

    /// PER of MCS `l` expressed through the mutual information `mi = I(snr)`.
    #[inline]
    pub(crate) fn per_at_mi(&self, l: usize, mi: f64) -> f64 {
        if mi < self.rates[l] {
            1.0
        } else {
            self.per_at(l, inverse_mi(mi).max(self.thresholds[l]))
        }
    }
}

/// `I(snr) = log2(1 + snr)` in bits per symbol.
pub fn mutual_information(snr: f64) -> Result<f64> {
    if snr < 0.0 || snr.is_nan() {
        return domain(format!("SNR must be non-negative, got {snr}"));
    }
    Ok(mi(snr))
}

#[inline]
pub(crate) fn mi(snr: f64) -> f64 {
    snr.ln_1p() / LN_2
}

/// `I^-1(v) = 2^v - 1`.
#[inline]
pub fn inverse_mi(bits: f64) -> f64 {
    (bits * LN_2).exp_m1()
}

/// Multiplicative SNR margin over the threshold that brings the PER down to
/// `target_per`: `ln(1/eps)/a + 1`.
pub fn snr_margin_delta(target_per: f64, decay: f64) -> Result<f64> {
    if !(target_per > 0.0 && target_per < 1.0) {
        return domain(format!("target PER must lie in (0,1), got {target_per}"));
    }
    if !(decay > 0.0) {
        return domain(format!("decay must be positive, got {decay}"));
    }
    Ok((1.0 / target_per).ln() / decay + 1.0)
}

/// How the receiver combines HARQ rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CombiningType {
    /// Repetition redundancy (Chase combining): SNRs add.
    Rr,
    /// Incremental redundancy: mutual information adds.
    Ir,
}

impl CombiningType {
    /// The accumulation map `h`.
    pub fn h(self, snr: f64) -> f64 {
        match self {
            CombiningType::Rr => snr,
            CombiningType::Ir => mi(snr),
        }
    }

    pub fn h_inv(self, v: f64) -> f64 {
        match self {
            CombiningType::Rr => v,
            CombiningType::Ir => inverse_mi(v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CombiningType::Rr => "rr",
            CombiningType::Ir => "ir",
        }
    }

    /// Aggregate SNR of `k` rounds all at `snr`.
    pub(crate) fn repeated(self, snr: f64, k: usize) -> f64 {
        match self {
            CombiningType::Rr => k as f64 * snr,
            CombiningType::Ir if k == 1 => snr,
            CombiningType::Ir => inverse_mi(k as f64 * mi(snr)),
        }
    }

    /// Single-round SNR at which `k` identical rounds reach `target`.
    pub(crate) fn repeated_inverse(self, target: f64, k: usize) -> f64 {
        match self {
            CombiningType::Rr => target / k as f64,
            CombiningType::Ir => inverse_mi(mi(target) / k as f64),
        }
    }
}

fn check_snrs(snrs: &[f64]) -> Result<()> {
    if snrs.is_empty() {
        return domain("at least one SNR is required");
    }
    if snrs.iter().any(|s| *s < 0.0 || s.is_nan()) {
        return domain("SNRs must be non-negative");
    }
    Ok(())
}

/// `h^-1(sum_t h(snr_t))`. The IR sum is accumulated in the MI domain and
/// exponentiated once.
pub fn aggregate_snr(snrs: &[f64], combining: CombiningType) -> Result<f64> {
    check_snrs(snrs)?;
    Ok(combining.h_inv(snrs.iter().map(|s| combining.h(*s)).sum()))
}

/// IR aggregate SNR with variable sub-codeword lengths:
/// `I^-1((1/first_len) sum_t len_t I(snr_t))`.
pub fn aggregate_snr_vl(first_len: f64, entries: &[(f64, f64)]) -> Result<f64> {
    if !(first_len > 0.0) {
        return domain(format!("first length must be positive, got {first_len}"));
    }
    if entries.iter().any(|(len, snr)| *len < 0.0 || *snr < 0.0) {
        return domain("lengths and SNRs must be non-negative");
    }
    let bits: f64 = entries.iter().map(|(len, snr)| len * mi(*snr)).sum();
    Ok(inverse_mi(bits / first_len))
}

/// Combining rule for [`aggregate_snr_vl`]; only IR has a variable-length form.
pub fn aggregate_snr_vl_with(combining: CombiningType, first_len: f64, entries: &[(f64, f64)]) -> Result<f64> {
    match combining {
        CombiningType::Ir => aggregate_snr_vl(first_len, entries),
        CombiningType::Rr => Err(Error::Unsupported(
            "variable-length accumulation is defined for IR only".into(),
        )),
    }
}

/// Probability that all rounds so far failed, `PER_l(aggregate)`.
pub fn nack_probability(l: usize, snrs: &[f64], combining: CombiningType, table: &McsTable) -> Result<f64> {
    table.check_index(l)?;
    let agg = aggregate_snr(snrs, combining)?;
    Ok(table.per_at(l, agg))
}
