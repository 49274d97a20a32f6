//! Variable-length HARQ: several packets share a block, each with its own
//! sub-codeword length, chosen every block by exhaustive search.
//!
//! Packets carry `R_1` bits per unit block, so a first transmission of
//! length `len` uses rate `R_1 / len`; the MCS table must list exactly those
//! rates in the order of the primary lengths. Accumulation is in mutual
//! information: a retransmission of length `len` adds `(len / len_1) I(snr)`.

use super::{BatchMeans, SimResult};
use crate::channel::{ChannelConfig, FadingMode};
use crate::coding::{inverse_mi, mi, McsTable};
use crate::error::{domain, Error, Result};
use crate::harq_analysis::{HarqConfig, HarqVariant};

/// Slack on the unit-block capacity for sums of reciprocal lengths.
const CAPACITY_SLACK: f64 = 1e-9;

/// One buffered packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketState {
    /// Transmissions so far, `0..K`.
    pub harq_count: usize,
    /// Length of the first transmission; `0` while fresh.
    pub first_len: f64,
    /// Aggregate SNR of the past transmissions; `0` while fresh.
    pub snr_sigma: f64,
    /// Length in the current block; `0` when not scheduled.
    pub assigned_len: f64,
}

impl PacketState {
    pub fn fresh() -> Self {
        Self {
            harq_count: 0,
            first_len: 0.0,
            snr_sigma: 0.0,
            assigned_len: 0.0,
        }
    }

    pub fn is_fresh(&self) -> bool {
        self.harq_count == 0
    }
}

/// Outcome of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlStep {
    /// Bits per symbol delivered in the block.
    pub reward: f64,
    pub acked: u64,
    pub discarded: u64,
}

/// Buffer capacity `K L`.
pub fn buffer_capacity(harq: &HarqConfig) -> usize {
    harq.max_rounds * harq.lengths_primary.len()
}

fn check_config(harq: &HarqConfig, table: &McsTable) -> Result<()> {
    if harq.variant != HarqVariant::VariableLength {
        return Err(Error::Unsupported(format!(
            "{:?} HARQ configuration passed to the variable-length simulator",
            harq.variant
        )));
    }
    if table.len() != harq.lengths_primary.len() {
        return Err(Error::LengthMismatch {
            expected: harq.lengths_primary.len(),
            actual: table.len(),
        });
    }
    let r1 = table.rate(0);
    for (l, len) in harq.lengths_primary.iter().enumerate() {
        if (table.rate(l) * len - r1).abs() > 1e-9 * r1 {
            return domain(format!(
                "rate {} does not match first length {len} (expected {})",
                table.rate(l),
                r1 / len
            ));
        }
    }
    Ok(())
}

/// MCS index of a packet whose first transmission has length `first_len`.
fn mcs_of(harq: &HarqConfig, first_len: f64) -> usize {
    harq.lengths_primary
        .iter()
        .position(|l| *l == first_len)
        .expect("first length is a primary length")
}

/// `(SNR', f)` for packet `p` sent with length `len` at SNR `snr`: the new
/// aggregate SNR and the probability of failing given the past failures.
fn attempt(p: &PacketState, len: f64, snr: f64, harq: &HarqConfig, table: &McsTable) -> (f64, f64) {
    if p.is_fresh() {
        let l = mcs_of(harq, len);
        return (snr, table.per_at(l, snr));
    }
    let l = mcs_of(harq, p.first_len);
    let bits = mi(p.snr_sigma) + len / p.first_len * mi(snr);
    let before = table.per_at(l, p.snr_sigma);
    let after = table.per_at_mi(l, bits);
    let f = if before > 0.0 { (after / before).min(1.0) } else { 0.0 };
    (inverse_mi(bits), f)
}

struct Search<'a> {
    /// Per retransmission packet: buffer index and `(len, value)` options.
    retx: Vec<(usize, Vec<(f64, f64)>)>,
    /// Fresh packings: `(total length, value, lengths ascending)`.
    packings: Vec<(f64, f64, Vec<f64>)>,
    fresh: &'a [usize],
    /// Suffix bounds over `retx[i..]`: summed best value and best density.
    rest_value: Vec<f64>,
    rest_density: Vec<f64>,
    fresh_best: f64,
    chosen: Vec<f64>,
    best: Option<(f64, usize, Vec<f64>)>,
    size: usize,
}

impl Search<'_> {
    fn dfs(&mut self, i: usize, value: f64, used: f64, count: usize) {
        let cap = 1.0 - used;
        if let Some((b, _, _)) = &self.best {
            let by_sum = value + self.rest_value[i] + self.fresh_best;
            let by_cap = value + cap.max(0.0) * self.rest_density[i];
            if by_sum.min(by_cap) < *b {
                return;
            }
        }
        if i == self.retx.len() {
            self.leaf(value, used, count);
            return;
        }
        self.dfs(i + 1, value, used, count);
        for j in 0..self.retx[i].1.len() {
            let (len, v) = self.retx[i].1[j];
            if used + len <= 1.0 + CAPACITY_SLACK {
                self.chosen[self.retx[i].0] = len;
                self.dfs(i + 1, value + v, used + len, count + 1);
                self.chosen[self.retx[i].0] = 0.0;
            }
        }
    }

    fn leaf(&mut self, value: f64, used: f64, count: usize) {
        for p in 0..self.packings.len() {
            let (len, v, ref lens) = self.packings[p];
            if used + len > 1.0 + CAPACITY_SLACK || lens.len() > self.fresh.len() {
                continue;
            }
            let total = value + v;
            let n = count + lens.len();
            let tie = match &self.best {
                None => false,
                Some((b, bn, _)) => {
                    if total < *b || (total == *b && n > *bn) {
                        continue;
                    }
                    total == *b && n == *bn
                }
            };
            // lexicographically smallest placement: the shortest lengths on
            // the last fresh packets, zeros before them
            let mut full = self.chosen.clone();
            let skip = self.fresh.len() - lens.len();
            for (slot, l) in self.fresh[skip..].iter().zip(lens) {
                full[*slot] = *l;
            }
            if !tie || lex_less(&full, &self.best.as_ref().expect("tie has a best").2) {
                self.best = Some((total, n, full));
            }
        }
        debug_assert_eq!(self.chosen.len(), self.size);
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Fresh packings from the primary lengths with total length at most 1 and
/// at most `limit` packets; members with zero success probability are left
/// out since they only add packets.
fn fresh_packings(values: &[(f64, f64)], limit: usize) -> Vec<(f64, f64, Vec<f64>)> {
    fn rec(
        values: &[(f64, f64)],
        start: usize,
        limit: usize,
        acc: &mut Vec<(f64, f64)>,
        out: &mut Vec<(f64, f64, Vec<f64>)>,
    ) {
        let used: f64 = acc.iter().map(|p| p.0).sum();
        let value: f64 = acc.iter().map(|p| p.1).sum();
        let mut lens: Vec<f64> = acc.iter().map(|p| p.0).collect();
        lens.sort_by(f64::total_cmp);
        out.push((used, value, lens));
        if acc.len() == limit {
            return;
        }
        for j in start..values.len() {
            let (len, v) = values[j];
            if v > 0.0 && used + len <= 1.0 + CAPACITY_SLACK {
                acc.push((len, v));
                rec(values, j, limit, acc, out);
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(values, 0, limit, &mut Vec::new(), &mut out);
    out
}

/// Lengths maximizing the expected number of ACKs in the block,
/// `sum_h (1 - f(h))` subject to `sum_h len_h <= 1`.
///
/// Fresh packets may only use primary lengths; retransmissions may use any
/// length. Among equal objectives the schedule with fewer packets wins, then
/// the lexicographically smallest length vector in buffer order.
pub fn vl_schedule(buffer: &[PacketState], snr: f64, harq: &HarqConfig, table: &McsTable) -> Result<Vec<f64>> {
    check_config(harq, table)?;
    let cap = buffer_capacity(harq);
    if buffer.len() > cap {
        return Err(Error::BufferOverflow {
            size: buffer.len(),
            capacity: cap,
        });
    }
    if snr < 0.0 || snr.is_nan() {
        return domain(format!("SNR must be non-negative, got {snr}"));
    }
    let all_lengths: Vec<f64> = harq.lengths_primary.iter().chain(&harq.lengths_aux).copied().collect();

    let mut retx = Vec::new();
    let mut fresh = Vec::new();
    for (i, p) in buffer.iter().enumerate() {
        if p.is_fresh() {
            fresh.push(i);
            continue;
        }
        let opts: Vec<(f64, f64)> = all_lengths
            .iter()
            .map(|len| (*len, 1.0 - attempt(p, *len, snr, harq, table).1))
            .filter(|(_, v)| *v > 0.0)
            .collect();
        if !opts.is_empty() {
            retx.push((i, opts));
        }
    }
    let fresh_values: Vec<(f64, f64)> = harq
        .lengths_primary
        .iter()
        .enumerate()
        .map(|(l, len)| (*len, 1.0 - table.per_at(l, snr)))
        .collect();
    let packings = fresh_packings(&fresh_values, fresh.len());
    let fresh_best = packings.iter().map(|p| p.1).fold(0.0, f64::max);
    let fresh_density = fresh_values.iter().map(|(l, v)| v / l).fold(0.0, f64::max);

    let n = retx.len();
    let mut rest_value = vec![0.0; n + 1];
    let mut rest_density = vec![fresh_density; n + 1];
    for i in (0..n).rev() {
        let best = retx[i].1.iter().map(|o| o.1).fold(0.0, f64::max);
        let dens = retx[i].1.iter().map(|o| o.1 / o.0).fold(0.0, f64::max);
        rest_value[i] = rest_value[i + 1] + best;
        rest_density[i] = rest_density[i + 1].max(dens);
    }

    let mut search = Search {
        retx,
        packings,
        fresh: &fresh,
        rest_value,
        rest_density,
        fresh_best,
        chosen: vec![0.0; buffer.len()],
        best: None,
        size: buffer.len(),
    };
    search.dfs(0, 0.0, 0.0, 0);
    Ok(search.best.map(|b| b.2).unwrap_or_else(|| vec![0.0; buffer.len()]))
}

/// Applies the block outcomes (`true` for ACK) of `assignment` at SNR `snr`,
/// then tops the buffer up with fresh packets to its previous size.
pub fn vl_update(
    buffer: &mut Vec<PacketState>,
    assignment: &[f64],
    snr: f64,
    outcomes: &[bool],
    harq: &HarqConfig,
    table: &McsTable,
) -> Result<VlStep> {
    check_config(harq, table)?;
    for len in [assignment.len(), outcomes.len()] {
        if len != buffer.len() {
            return Err(Error::LengthMismatch {
                expected: buffer.len(),
                actual: len,
            });
        }
    }
    let used: f64 = assignment.iter().sum();
    if used > 1.0 + CAPACITY_SLACK {
        return domain(format!("schedule uses {used} > 1 block"));
    }
    let mut step = VlStep {
        reward: 0.0,
        acked: 0,
        discarded: 0,
    };
    let mut next = Vec::with_capacity(buffer.len());
    for ((p, len), ack) in buffer.iter().zip(assignment).zip(outcomes) {
        let mut p = *p;
        if *len == 0.0 {
            p.assigned_len = 0.0;
            next.push(p);
            continue;
        }
        if p.is_fresh() && !harq.lengths_primary.contains(len) {
            return domain(format!("first transmission length {len} is not a primary length"));
        }
        if *ack {
            step.reward += table.rate(0);
            step.acked += 1;
            continue;
        }
        if p.harq_count + 1 >= harq.max_rounds {
            step.discarded += 1;
            continue;
        }
        let (sigma, _) = attempt(&p, *len, snr, harq, table);
        if p.is_fresh() {
            p.first_len = *len;
        }
        p.snr_sigma = sigma;
        p.harq_count += 1;
        p.assigned_len = 0.0;
        next.push(p);
    }
    next.resize(buffer.len(), PacketState::fresh());
    *buffer = next;
    Ok(step)
}

/// Monte Carlo throughput of variable-length HARQ in fast fading with a
/// saturated buffer of [`buffer_capacity`] packets.
pub fn simulate_vl(harq: &HarqConfig, table: &McsTable, channel: &ChannelConfig, blocks: u64) -> Result<SimResult> {
    simulate_vl_with_buffer(harq, table, channel, blocks, buffer_capacity(harq))
}

/// As [`simulate_vl`] with `packets` buffered packets, at most the capacity.
pub fn simulate_vl_with_buffer(
    harq: &HarqConfig,
    table: &McsTable,
    channel: &ChannelConfig,
    blocks: u64,
    packets: usize,
) -> Result<SimResult> {
    check_config(harq, table)?;
    if packets == 0 || packets > buffer_capacity(harq) {
        return domain(format!(
            "buffer of {packets} packets outside 1..={}",
            buffer_capacity(harq)
        ));
    }
    if channel.fading_mode() != FadingMode::Fast {
        return Err(Error::Unsupported(
            "variable-length HARQ is simulated in fast fading only".into(),
        ));
    }
    let mut acc = BatchMeans::new(blocks)?;
    let mut stream = channel.stream(0);
    let mut buffer = vec![PacketState::fresh(); packets];
    let mut outcomes = Vec::with_capacity(buffer.len());
    for b in 0..blocks {
        let snr = stream.next_snr();
        let assignment = vl_schedule(&buffer, snr, harq, table)?;
        outcomes.clear();
        for (p, len) in buffer.iter_mut().zip(&assignment) {
            p.assigned_len = *len;
            let ack = *len > 0.0 && !stream.bernoulli(attempt(p, *len, snr, harq, table).1);
            outcomes.push(ack);
        }
        let step = vl_update(&mut buffer, &assignment, snr, &outcomes, harq, table)?;
        for _ in 0..step.acked {
            acc.ack(b, table.rate(0));
        }
        acc.drops += step.discarded;
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_linear;
    use crate::coding::Decay;

    fn setup(aux: Vec<f64>) -> (HarqConfig, McsTable) {
        let primary = vec![1.0, 0.5, 1.0 / 3.0, 0.25, 0.2];
        let t = McsTable::new(primary.iter().map(|l| 0.75 / l).collect(), Decay::Finite(4.0)).unwrap();
        (HarqConfig::variable_length(4, primary, aux).unwrap(), t)
    }

    fn standard_aux() -> Vec<f64> {
        vec![1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0]
    }

    #[test]
    fn zero_snr_schedules_nothing() {
        let (h, t) = setup(standard_aux());
        let buf = vec![PacketState::fresh(); buffer_capacity(&h)];
        let a = vl_schedule(&buf, 0.0, &h, &t).unwrap();
        assert!(a.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn fresh_buffer_picks_best_packing() {
        let (h, t) = setup(standard_aux());
        let buf = vec![PacketState::fresh(); buffer_capacity(&h)];
        for db in [0.0, 5.0, 10.0, 15.0, 20.0, 30.0] {
            let g = db_to_linear(db);
            let a = vl_schedule(&buf, g, &h, &t).unwrap();
            let value: f64 = a
                .iter()
                .filter(|l| **l > 0.0)
                .map(|l| 1.0 - t.per_at(mcs_of(&h, *l), g))
                .sum();
            // best single-rate packing, in units of R_1
            let amc = (0..5)
                .map(|l| t.rate(l) * (1.0 - t.per_at(l, g)) / 0.75)
                .fold(0.0, f64::max);
            assert!(value >= amc - 1e-12, "{db} dB: {value} < {amc}");
            assert!(a.iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn mi_consistent_aggregate() {
        let (h, t) = setup(standard_aux());
        let p = PacketState {
            harq_count: 1,
            first_len: 1.0,
            snr_sigma: 1.0,
            assigned_len: 0.0,
        };
        let (sigma, _) = attempt(&p, 0.5, 3.0, &h, &t);
        assert!((sigma - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nack_accumulates_and_last_round_discards() {
        let (h, t) = setup(standard_aux());
        let mut buf = vec![PacketState::fresh(); buffer_capacity(&h)];
        let mut a = vec![0.0; buf.len()];
        a[0] = 0.5;
        let mut out = vec![false; buf.len()];
        vl_update(&mut buf, &a, 2.0, &out, &h, &t).unwrap();
        let p = buf[0];
        assert_eq!(p.harq_count, 1);
        assert_eq!(p.first_len, 0.5);
        assert!((p.snr_sigma - 2.0).abs() < 1e-12);
        let mut last = p.snr_sigma;
        for k in 2..=4 {
            a[0] = 0.125;
            let step = vl_update(&mut buf, &a, 1.0, &out, &h, &t).unwrap();
            if k < 4 {
                assert!(buf[0].snr_sigma > last);
                last = buf[0].snr_sigma;
                assert_eq!(buf[0].harq_count, k);
            } else {
                assert_eq!(step.discarded, 1);
                assert!(buf[0].is_fresh());
            }
        }
        assert_eq!(buf.len(), buffer_capacity(&h));
        out[0] = true;
        a[0] = 1.0;
        let step = vl_update(&mut buf, &a, 10.0, &out, &h, &t).unwrap();
        assert_eq!(step.acked, 1);
        assert!((step.reward - 0.75).abs() < 1e-15);
        assert!(buf.iter().all(|p| p.is_fresh()));
    }

    #[test]
    fn update_validates_inputs() {
        let (h, t) = setup(standard_aux());
        let mut buf = vec![PacketState::fresh(); buffer_capacity(&h)];
        assert!(vl_update(&mut buf, &[1.0], 1.0, &[false], &h, &t).is_err());
        let mut a = vec![0.0; buf.len()];
        a[0] = 1.0;
        a[1] = 0.5;
        let out = vec![false; buf.len()];
        assert!(vl_update(&mut buf, &a, 1.0, &out, &h, &t).is_err());
        let over = vec![PacketState::fresh(); buffer_capacity(&h) + 1];
        assert!(matches!(
            vl_schedule(&over, 1.0, &h, &t),
            Err(Error::BufferOverflow { .. })
        ));
    }

    #[test]
    fn schedule_is_optimal_on_small_buffers() {
        // brute force over every assignment of a small mixed buffer
        let (h, t) = setup(vec![0.125]);
        let retx = [
            PacketState {
                harq_count: 1,
                first_len: 0.25,
                snr_sigma: 9.0,
                assigned_len: 0.0,
            },
            PacketState {
                harq_count: 2,
                first_len: 0.5,
                snr_sigma: 4.0,
                assigned_len: 0.0,
            },
            PacketState {
                harq_count: 1,
                first_len: 1.0,
                snr_sigma: 0.5,
                assigned_len: 0.0,
            },
        ];
        let mut buf = retx.to_vec();
        buf.push(PacketState::fresh());
        buf.push(PacketState::fresh());
        let all: Vec<f64> = h.lengths_primary.iter().chain(&h.lengths_aux).copied().collect();
        for db in [2.0, 8.0, 14.0] {
            let g = db_to_linear(db);
            let value = |a: &[f64]| -> f64 {
                buf.iter()
                    .zip(a)
                    .filter(|(_, l)| **l > 0.0)
                    .map(|(p, l)| 1.0 - attempt(p, *l, g, &h, &t).1)
                    .sum()
            };
            let mut best = 0.0f64;
            let choices = all.len() + 1;
            for code in 0..choices.pow(buf.len() as u32) {
                let mut c = code;
                let mut a = vec![0.0; buf.len()];
                for (i, p) in buf.iter().enumerate() {
                    let pick = c % choices;
                    c /= choices;
                    if pick > 0 {
                        a[i] = all[pick - 1];
                        if p.is_fresh() && !h.lengths_primary.contains(&a[i]) {
                            a[i] = -1.0;
                        }
                    }
                }
                if a.iter().any(|l| *l < 0.0) || a.iter().sum::<f64>() > 1.0 + 1e-9 {
                    continue;
                }
                best = best.max(value(&a));
            }
            let got = vl_schedule(&buf, g, &h, &t).unwrap();
            assert!((value(&got) - best).abs() < 1e-12, "{db} dB: {} vs {best}", value(&got));
        }
    }

    #[test]
    fn single_packet_without_aux_is_plain_harq() {
        // one packet of length one: a plain IR cycle at rate R_1
        let primary = vec![1.0];
        let t = McsTable::new(vec![0.75], Decay::Finite(4.0)).unwrap();
        let h = HarqConfig::variable_length(3, primary, vec![]).unwrap();
        let ch = ChannelConfig::new(db_to_linear(15.0), FadingMode::Fast, 6).unwrap();
        let sim = simulate_vl_with_buffer(&h, &t, &ch, 200_000, 1).unwrap();
        let r = crate::amc::DecisionRegions::from_thresholds(vec![0.0]).unwrap();
        let plain = crate::harq_analysis::fast_throughput(&r, 3, crate::coding::CombiningType::Ir, &t, ch.avg_snr())
            .unwrap()
            .value;
        // the only difference left is that blocks without any chance of
        // success are skipped, which is rare at this SNR
        assert!(
            (sim.throughput - plain).abs() <= sim.ci_half_width + 0.01 * plain,
            "{} vs {plain}",
            sim.throughput
        );
    }

    #[test]
    fn deterministic() {
        let (h, t) = setup(standard_aux());
        let ch = ChannelConfig::new(db_to_linear(10.0), FadingMode::Fast, 1).unwrap();
        let a = simulate_vl(&h, &t, &ch, 100_000).unwrap();
        let b = simulate_vl(&h, &t, &ch, 100_000).unwrap();
        assert_eq!(a, b);
        assert!(a.throughput > 0.0);
    }
}
