//! Block-fading Rayleigh channel: exponential SNR law and seeded sampling.
//!
//! SNRs are linear throughout; decibels only appear at I/O boundaries via
//! [`db_to_linear`] and [`linear_to_db`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};

/// Correlation of the SNR between the rounds of one HARQ cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FadingMode {
    /// Independent SNR in every block.
    Fast,
    /// One SNR shared by all rounds of a cycle.
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    avg_snr: f64,
    fading_mode: FadingMode,
    seed: u64,
}

impl ChannelConfig {
    pub fn new(avg_snr: f64, fading_mode: FadingMode, seed: u64) -> Result<Self> {
        if !(avg_snr > 0.0 && avg_snr.is_finite()) {
            return domain(format!("average SNR must be positive and finite, got {avg_snr}"));
        }
        Ok(Self {
            avg_snr,
            fading_mode,
            seed,
        })
    }

    pub fn avg_snr(&self) -> f64 {
        self.avg_snr
    }

    pub fn fading_mode(&self) -> FadingMode {
        self.fading_mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Opens the sample stream `stream_id` of this configuration.
    pub fn stream(&self, stream_id: u64) -> SnrStream {
        SnrStream::new(self.avg_snr, self.seed, stream_id)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Exponential SNR density `(1/avg) exp(-snr/avg)`.
pub fn snr_pdf(snr: f64, avg_snr: f64) -> Result<f64> {
    if snr < 0.0 || snr.is_nan() {
        return domain(format!("SNR must be non-negative, got {snr}"));
    }
    if !(avg_snr > 0.0) {
        return domain(format!("average SNR must be positive, got {avg_snr}"));
    }
    Ok((-snr / avg_snr).exp() / avg_snr)
}

/// `P(SNR <= snr)`.
pub(crate) fn snr_cdf(snr: f64, avg_snr: f64) -> f64 {
    if snr <= 0.0 {
        0.0
    } else {
        -(-snr / avg_snr).exp_m1()
    }
}

/// A deterministic stream of uniform and exponential variates.
///
/// The stream is a ChaCha8 keystream selected by `(seed, stream_id)`, so the
/// n-th draw depends only on those two values and `n`.
#[derive(Debug, Clone)]
pub struct SnrStream {
    avg_snr: f64,
    rng: ChaCha8Rng,
}

impl SnrStream {
    pub fn new(avg_snr: f64, seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { avg_snr, rng }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Exponential draw by inversion, `-avg ln(1 - U)`.
    pub fn next_snr(&mut self) -> f64 {
        let u = self.uniform();
        -self.avg_snr * (-u).ln_1p()
    }

    /// Bernoulli draw with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// SNRs seen by the `rounds` rounds of one HARQ cycle.
pub fn sample_cycle_snrs(cfg: &ChannelConfig, rounds: usize, stream_id: u64) -> Result<Vec<f64>> {
    if rounds == 0 {
        return domain("rounds must be at least 1");
    }
    let mut stream = cfg.stream(stream_id);
    Ok(match cfg.fading_mode {
        FadingMode::Fast => (0..rounds).map(|_| stream.next_snr()).collect(),
        FadingMode::Slow => vec![stream.next_snr(); rounds],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};

    #[test]
    fn pdf_values() {
        assert_eq!(snr_pdf(0.0, 1.0).unwrap(), 1.0);
        for avg in [0.1, 1.0, 7.5] {
            let v = snr_pdf(avg, avg).unwrap();
            assert!((v - (-1f64).exp() / avg).abs() < 1e-15);
        }
    }

    #[test]
    fn pdf_normalizes() {
        let avg = 3.0;
        let mass = integrate(
            |x| snr_pdf(x, avg).unwrap(),
            &[0.0, avg, 60.0 * avg],
            Tolerance::absolute(1e-13),
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pdf_domain_errors() {
        assert!(snr_pdf(-1.0, 1.0).is_err());
        assert!(snr_pdf(1.0, 0.0).is_err());
        assert!(ChannelConfig::new(0.0, FadingMode::Fast, 0).is_err());
    }

    #[test]
    fn slow_cycle_repeats_one_draw() {
        let cfg = ChannelConfig::new(2.0, FadingMode::Slow, 9).unwrap();
        let s = sample_cycle_snrs(&cfg, 4, 3).unwrap();
        assert!(s.iter().all(|v| *v == s[0]));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ChannelConfig::new(2.0, FadingMode::Fast, 11).unwrap();
        assert_eq!(
            sample_cycle_snrs(&cfg, 16, 5).unwrap(),
            sample_cycle_snrs(&cfg, 16, 5).unwrap()
        );
        assert_ne!(
            sample_cycle_snrs(&cfg, 16, 5).unwrap(),
            sample_cycle_snrs(&cfg, 16, 6).unwrap()
        );
        assert!(sample_cycle_snrs(&cfg, 0, 5).is_err());
    }

    #[test]
    fn fast_sample_mean() {
        let cfg = ChannelConfig::new(2.0, FadingMode::Fast, 1).unwrap();
        let s = sample_cycle_snrs(&cfg, 1_000_000, 0).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        // sigma of the mean is avg/sqrt(n)
        assert!((mean - 2.0).abs() < 5.0 * 2.0 / 1e3, "mean {mean}");
    }

    #[test]
    fn empirical_cdf_passes_ks() {
        let avg = 1.7;
        let cfg = ChannelConfig::new(avg, FadingMode::Fast, 42).unwrap();
        let mut s = sample_cycle_snrs(&cfg, 1_000_000, 7).unwrap();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let d = s
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let c = snr_cdf(*x, avg);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0f64, f64::max);
        // 1% critical value of the one-sample KS statistic.
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let cfg = ChannelConfig::new(1.0, FadingMode::Fast, 3).unwrap();
        let n = 1_000_000;
        let a = sample_cycle_snrs(&cfg, n, 0).unwrap();
        let b = sample_cycle_snrs(&cfg, n, 1).unwrap();
        let corr = |x: &[f64], y: &[f64]| {
            let m = x.len() as f64;
            let mx = x.iter().sum::<f64>() / m;
            let my = y.iter().sum::<f64>() / m;
            let cov: f64 = x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum();
            let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
            let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
            cov / (vx * vy).sqrt()
        };
        assert!(corr(&a, &b).abs() < 0.01);
        assert!(corr(&a[1..], &b[..n - 1]).abs() < 0.01);
        assert!(corr(&a[1..], &a[..n - 1]).abs() < 0.01);
    }

    #[test]
    fn db_round_trip() {
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((linear_to_db(100.0) - 20.0).abs() < 1e-12);
    }
}
