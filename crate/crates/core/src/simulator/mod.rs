//! Monte Carlo engines for AMC/HARQ over block fading.
//!
//! Every engine runs a block-level state machine for a fixed number of
//! blocks, credits each ACK to the block in which it happens and reports the
//! reward per block with a batch-means confidence half-width.

mod plain;
mod vl;

pub use plain::{simulate_packet_drop, simulate_plain};
pub use vl::{buffer_capacity, simulate_vl, simulate_vl_with_buffer, vl_schedule, vl_update, PacketState, VlStep};

use crate::error::{domain, Result};

/// Smallest run accepted by the simulators.
pub const MIN_BLOCKS: u64 = 100_000;
/// Number of batches behind the confidence half-width.
pub const BATCHES: usize = 100;
/// Confidence half-width in standard errors.
pub const CI_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    /// Bits per symbol.
    pub throughput: f64,
    /// `3 sigma` half-width of the throughput estimate.
    pub ci_half_width: f64,
    pub blocks: u64,
    pub acked_packets: u64,
    /// Packets given up without an ACK.
    pub drops: u64,
}

/// Reward per block accumulated into equal batches of consecutive blocks.
#[derive(Debug, Clone)]
pub(crate) struct BatchMeans {
    blocks: u64,
    batch_len: u64,
    sums: Vec<f64>,
    pub(crate) acked: u64,
    pub(crate) drops: u64,
}

impl BatchMeans {
    pub(crate) fn new(blocks: u64) -> Result<Self> {
        if blocks < MIN_BLOCKS {
            return domain(format!("at least {MIN_BLOCKS} blocks are required, got {blocks}"));
        }
        Ok(Self {
            blocks,
            batch_len: blocks / BATCHES as u64,
            sums: vec![0.0; BATCHES],
            acked: 0,
            drops: 0,
        })
    }

    pub(crate) fn blocks(&self) -> u64 {
        self.blocks
    }

    /// Adds an ACK worth `reward` at block `block`; blocks past the end of
    /// the run are ignored.
    #[inline]
    pub(crate) fn ack(&mut self, block: u64, reward: f64) {
        if block < self.blocks {
            let i = ((block / self.batch_len) as usize).min(BATCHES - 1);
            self.sums[i] += reward;
            self.acked += 1;
        }
    }

    pub(crate) fn finish(self) -> SimResult {
        let total: f64 = self.sums.iter().sum();
        let throughput = total / self.blocks as f64;
        let means: Vec<f64> = self
            .sums
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let len = if i == BATCHES - 1 {
                    self.blocks - self.batch_len * (BATCHES as u64 - 1)
                } else {
                    self.batch_len
                };
                s / len as f64
            })
            .collect();
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
        SimResult {
            throughput,
            ci_half_width: CI_SIGMAS * (var / n).sqrt(),
            blocks: self.blocks,
            acked_packets: self.acked,
            drops: self.drops,
        }
    }
}
