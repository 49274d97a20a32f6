//! Plain and packet-dropping HARQ cycles.
//!
//! Round `k` of a cycle fails with probability `f_k / f_{k-1}` given that the
//! earlier rounds failed, where `f_k` is the PER at the aggregate SNR of the
//! first `k` rounds. Over a cycle this reproduces `P(k failures) = f_k`.

use super::{BatchMeans, SimResult};
use crate::amc::DecisionRegions;
use crate::channel::{ChannelConfig, FadingMode, SnrStream};
use crate::coding::McsTable;
use crate::error::{Error, Result};
use crate::harq_analysis::{HarqConfig, HarqVariant};

/// Blocks sharing one SNR draw in slow fading.
const SLOW_WINDOW: u64 = 16;

/// Runs one slow-fading cycle with failure probabilities `f[k-1] = f_k`;
/// returns the rounds used and whether the packet was acknowledged.
#[inline]
fn slow_cycle(f: &[f64], stream: &mut SnrStream) -> (u64, bool) {
    let mut prev = 1.0;
    for (k, fk) in f.iter().enumerate() {
        if !stream.bernoulli(fk / prev) {
            return (k as u64 + 1, true);
        }
        prev = *fk;
    }
    (f.len() as u64, false)
}

fn check(regions: &DecisionRegions, harq: &HarqConfig, table: &McsTable, want: HarqVariant) -> Result<()> {
    regions.check_table(table)?;
    if harq.variant != want {
        return Err(Error::Unsupported(format!(
            "{:?} HARQ configuration passed to the {want:?} simulator",
            harq.variant
        )));
    }
    Ok(())
}

/// Slow fading. Each SNR draw is held for a window of blocks that starts in
/// the stationary state of the renewal process at that SNR: the current
/// cycle is length-biased and entered at a uniform position. The expected
/// reward per block is then the per-SNR throughput averaged over the SNR law.
fn run_slow(
    regions: &DecisionRegions,
    harq: &HarqConfig,
    table: &McsTable,
    channel: &ChannelConfig,
    acc: &mut BatchMeans,
) {
    let k_max = harq.max_rounds;
    let n = acc.blocks();
    let mut stream = channel.stream(0);
    let mut f = vec![0.0; k_max];
    let mut block = 0;
    while block < n {
        let snr = stream.next_snr();
        let l = regions.classify(snr);
        let rate = table.rate(l);
        for (k, v) in f.iter_mut().enumerate() {
            *v = table.per_at(l, harq.combining.repeated(snr, k + 1));
        }
        let end = (block + SLOW_WINDOW).min(n);

        let (t, acked) = loop {
            let c = slow_cycle(&f, &mut stream);
            if stream.uniform() * (k_max as f64) < c.0 as f64 {
                break c;
            }
        };
        let pos = ((stream.uniform() * t as f64) as u64).min(t - 1);
        let mut done = block + (t - pos) - 1;
        let mut outcome = acked;
        while done < end {
            if outcome {
                acc.ack(done, rate);
            } else {
                acc.drops += 1;
            }
            let b = done + 1;
            if b >= end {
                break;
            }
            let (t, a) = slow_cycle(&f, &mut stream);
            done = b + t - 1;
            outcome = a;
        }
        block = end;
    }
}

/// Fast fading with an independent SNR in every block. With `drop` set, a
/// retransmission whose SNR maps to a higher rate than the first round
/// abandons the packet and starts a fresh cycle in the same block.
fn run_fast(
    regions: &DecisionRegions,
    harq: &HarqConfig,
    table: &McsTable,
    channel: &ChannelConfig,
    drop: bool,
    acc: &mut BatchMeans,
) {
    let n = acc.blocks();
    let h = harq.combining;
    let mut stream = channel.stream(0);
    let mut carried: Option<f64> = None;
    let mut b = 0;
    while b < n {
        let first = carried.take().unwrap_or_else(|| stream.next_snr());
        let l = regions.classify(first);
        let mut sum = h.h(first);
        let mut prev = 1.0;
        let mut k = 1;
        loop {
            let agg = if k == 1 { first } else { h.h_inv(sum) };
            let per = table.per_at(l, agg);
            let failed = stream.bernoulli(per / prev);
            if !failed {
                acc.ack(b, table.rate(l));
                b += 1;
                break;
            }
            b += 1;
            if k == harq.max_rounds {
                if b <= n {
                    acc.drops += 1;
                }
                break;
            }
            if b >= n {
                break;
            }
            prev = per;
            k += 1;
            let snr = stream.next_snr();
            if drop && regions.classify(snr) > l {
                acc.drops += 1;
                carried = Some(snr);
                break;
            }
            sum += h.h(snr);
        }
    }
}

/// Monte Carlo throughput of HARQ cycles on top of the regions.
pub fn simulate_plain(
    regions: &DecisionRegions,
    harq: &HarqConfig,
    table: &McsTable,
    channel: &ChannelConfig,
    blocks: u64,
) -> Result<SimResult> {
    check(regions, harq, table, HarqVariant::Plain)?;
    let mut acc = BatchMeans::new(blocks)?;
    match channel.fading_mode() {
        FadingMode::Slow => run_slow(regions, harq, table, channel, &mut acc),
        FadingMode::Fast => run_fast(regions, harq, table, channel, false, &mut acc),
    }
    Ok(acc.finish())
}

/// Packet-dropping HARQ. In slow fading the rate seen in later rounds never
/// differs from the first, so this is the plain simulation.
pub fn simulate_packet_drop(
    regions: &DecisionRegions,
    harq: &HarqConfig,
    table: &McsTable,
    channel: &ChannelConfig,
    blocks: u64,
) -> Result<SimResult> {
    check(regions, harq, table, HarqVariant::PacketDrop)?;
    let mut acc = BatchMeans::new(blocks)?;
    match channel.fading_mode() {
        FadingMode::Slow => run_slow(regions, harq, table, channel, &mut acc),
        FadingMode::Fast => run_fast(regions, harq, table, channel, true, &mut acc),
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::{amc_thresholds_exact, amc_throughput};
    use crate::channel::db_to_linear;
    use crate::coding::{CombiningType, Decay};
    use crate::harq_analysis::{fast_throughput, slow_cascade, slow_throughput};

    fn table() -> McsTable {
        McsTable::uniform(5, 0.75, Decay::Finite(4.0)).unwrap()
    }

    fn agree(sim: &SimResult, analytic: f64) {
        assert!(
            (sim.throughput - analytic).abs() <= sim.ci_half_width,
            "{} +- {} vs {analytic}",
            sim.throughput,
            sim.ci_half_width
        );
    }

    #[test]
    fn conditional_bernoulli_consistency() {
        let t = table();
        let cycles = 1_000_000u64;
        for (l, db) in [(2, 7.0), (4, 9.0)] {
            let snr = db_to_linear(db);
            let cas = slow_cascade(l, snr, 4, CombiningType::Ir, &t).unwrap();
            let f = &cas.values()[1..];
            let mut stream = SnrStream::new(1.0, 5, l as u64);
            let mut at_least = [0u64; 5];
            for _ in 0..cycles {
                let (rounds, acked) = slow_cycle(f, &mut stream);
                let failures = if acked { rounds - 1 } else { rounds };
                for c in at_least.iter_mut().take(failures as usize + 1) {
                    *c += 1;
                }
            }
            for k in 1..=4 {
                let p = at_least[k] as f64 / cycles as f64;
                let sigma = (f[k - 1] * (1.0 - f[k - 1]) / cycles as f64).sqrt();
                assert!(
                    (p - f[k - 1]).abs() <= 3.0 * sigma + 1e-12,
                    "l={l} k={k}: {p} vs {}",
                    f[k - 1]
                );
            }
        }
    }

    #[test]
    fn single_round_matches_amc() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let harq = HarqConfig::plain(CombiningType::Ir, 1).unwrap();
        for mode in [FadingMode::Fast, FadingMode::Slow] {
            let ch = ChannelConfig::new(db_to_linear(10.0), mode, 3).unwrap();
            let sim = simulate_plain(&r, &harq, &t, &ch, 400_000).unwrap();
            agree(&sim, amc_throughput(&r, &t, ch.avg_snr()).unwrap().value);
        }
    }

    #[test]
    fn slow_mode_matches_analysis() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let harq = HarqConfig::plain(CombiningType::Ir, 4).unwrap();
        let ch = ChannelConfig::new(db_to_linear(5.0), FadingMode::Slow, 11).unwrap();
        let sim = simulate_plain(&r, &harq, &t, &ch, 1_000_000).unwrap();
        agree(
            &sim,
            slow_throughput(&r, 4, CombiningType::Ir, &t, ch.avg_snr())
                .unwrap()
                .value,
        );
    }

    #[test]
    fn fast_mode_matches_analysis() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        for c in [CombiningType::Rr, CombiningType::Ir] {
            let harq = HarqConfig::plain(c, 4).unwrap();
            let ch = ChannelConfig::new(db_to_linear(15.0), FadingMode::Fast, 2).unwrap();
            let sim = simulate_plain(&r, &harq, &t, &ch, 1_000_000).unwrap();
            agree(&sim, fast_throughput(&r, 4, c, &t, ch.avg_snr()).unwrap().value);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let harq = HarqConfig::packet_drop(CombiningType::Rr, 4).unwrap();
        let ch = ChannelConfig::new(db_to_linear(12.0), FadingMode::Fast, 9).unwrap();
        let a = simulate_packet_drop(&r, &harq, &t, &ch, 100_000).unwrap();
        let b = simulate_packet_drop(&r, &harq, &t, &ch, 100_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn packet_drop_in_slow_fading_is_plain() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let ch = ChannelConfig::new(db_to_linear(8.0), FadingMode::Slow, 4).unwrap();
        let plain = simulate_plain(&r, &HarqConfig::plain(CombiningType::Ir, 3).unwrap(), &t, &ch, 200_000).unwrap();
        let pd = simulate_packet_drop(
            &r,
            &HarqConfig::packet_drop(CombiningType::Ir, 3).unwrap(),
            &t,
            &ch,
            200_000,
        )
        .unwrap();
        assert_eq!(plain, pd);
    }

    #[test]
    fn packet_drop_single_round_is_amc() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let ch = ChannelConfig::new(db_to_linear(20.0), FadingMode::Fast, 8).unwrap();
        let plain = simulate_plain(&r, &HarqConfig::plain(CombiningType::Rr, 1).unwrap(), &t, &ch, 200_000).unwrap();
        let pd = simulate_packet_drop(
            &r,
            &HarqConfig::packet_drop(CombiningType::Rr, 1).unwrap(),
            &t,
            &ch,
            200_000,
        )
        .unwrap();
        assert_eq!(plain, pd);
        assert_eq!(pd.drops, 200_000 - pd.acked_packets);
    }

    #[test]
    fn wrong_variant_is_rejected() {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let ch = ChannelConfig::new(1.0, FadingMode::Fast, 0).unwrap();
        let pd = HarqConfig::packet_drop(CombiningType::Rr, 2).unwrap();
        assert!(simulate_plain(&r, &pd, &t, &ch, 100_000).is_err());
    }
}
