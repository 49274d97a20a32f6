//! Throughput of adaptive modulation and coding (AMC) and hybrid ARQ over
//! block-fading Rayleigh channels: analytic evaluation, decision-region
//! optimization and Monte Carlo simulation.
//!
//! All SNRs are linear; MCS indices are zero-based.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amc;
pub mod channel;
pub mod coding;
pub mod error;
pub mod harq_analysis;
pub mod numeric;
pub mod optimizer;
pub mod quadrature;
pub mod simulator;
pub mod verify;

pub use amc::{
    amc_thresholds_closed_form, amc_thresholds_exact, amc_thresholds_per_target, amc_throughput, DecisionRegions,
    Interval, Provenance, RegionKind, ThroughputEstimate,
};
pub use channel::{db_to_linear, linear_to_db, sample_cycle_snrs, snr_pdf, ChannelConfig, FadingMode, SnrStream};
pub use coding::{
    aggregate_snr, aggregate_snr_vl, inverse_mi, mutual_information, nack_probability, snr_margin_delta, CombiningType,
    Decay, McsTable,
};
pub use error::{Error, Result};
pub use harq_analysis::{
    fast_cascade_conditional, fast_region_quantities, fast_throughput, posterior_rate_given_nack, slow_cascade,
    slow_throughput, slow_throughput_at, two_round_bound, ErrorCascade, FastCascade, HarqConfig, HarqVariant,
    RegionQuantities,
};
pub use optimizer::{
    fast_f, fast_optimize, fast_optimize_regions, slow_optimal_regions, DinkelbachState, FastOptimizerOptions,
    FastOptimum,
};
pub use simulator::{
    simulate_packet_drop, simulate_plain, simulate_vl, vl_schedule, vl_update, PacketState, SimResult, VlStep,
};
