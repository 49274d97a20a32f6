//! Sweep and threshold tables.

use std::fs;
use std::io::Write;

use rayon::prelude::*;

use amc_harq::optimizer::default_slow_grid;
use amc_harq::{
    amc_thresholds_closed_form, amc_thresholds_exact, amc_thresholds_per_target, amc_throughput, db_to_linear,
    fast_optimize_regions, fast_throughput, linear_to_db, simulate_packet_drop, simulate_vl, slow_optimal_regions,
    slow_throughput, two_round_bound, ChannelConfig, CombiningType, DecisionRegions, FadingMode, HarqConfig, McsTable,
    RegionKind,
};

use crate::config::{RegionSource, Scheme, Settings};
use crate::error::{config, CliError};

pub const SWEEP_HEADER: &str = "snr_avg_db,scheme,combining,a_tilde,K,region_source,throughput,ci_half_width,blocks";
pub const THRESHOLD_HEADER: &str = "snr_avg_db,scheme,l,gamma_l_db,degenerate";

/// Auxiliary retransmission lengths of variable-length HARQ.
const VL_AUX: [f64; 3] = [1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0];

/// `%.12g`-style formatting.
pub fn sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mantissa, e) = s.split_once('e').expect("exponent");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one sweep point, fixed by the base seed, scheme and SNR index.
fn point_seed(seed: u64, scheme: Scheme, snr_index: usize) -> u64 {
    splitmix(seed ^ splitmix(((scheme as u64) << 32) | snr_index as u64))
}

fn scheme_combining(scheme: Scheme, s: &Settings) -> Option<CombiningType> {
    match scheme {
        Scheme::Amc => None,
        Scheme::HarqRr => Some(CombiningType::Rr),
        Scheme::HarqIr | Scheme::VariableLength => Some(CombiningType::Ir),
        Scheme::PacketDrop => Some(s.combining),
        Scheme::TwoRoundBound => (s.regions == RegionSource::Optimized).then_some(s.combining),
    }
}

/// Region source actually used by `scheme`: AMC and packet dropping run on
/// AMC regions when optimized ones are requested.
fn effective_source(scheme: Scheme, s: &Settings) -> Option<RegionSource> {
    match (scheme, s.regions) {
        (Scheme::VariableLength, _) => None,
        (Scheme::Amc | Scheme::PacketDrop, RegionSource::Optimized) => Some(RegionSource::AmcExact),
        (_, r) => Some(r),
    }
}

fn regions(
    source: RegionSource,
    combining: CombiningType,
    s: &Settings,
    table: &McsTable,
    avg: f64,
) -> Result<DecisionRegions, CliError> {
    Ok(match source {
        RegionSource::AmcExact => amc_thresholds_exact(table)?,
        RegionSource::AmcClosedForm => amc_thresholds_closed_form(table)?,
        RegionSource::PerTarget => amc_thresholds_per_target(table, s.p_loss, s.arq_rounds)?,
        RegionSource::Optimized => match s.fading {
            FadingMode::Fast => fast_optimize_regions(s.k, combining, table, avg)?.0,
            FadingMode::Slow => slow_optimal_regions(s.k, combining, table, &default_slow_grid())?,
        },
    })
}

/// Variable-length configuration derived from the rate set: first lengths
/// `R_1 / R_l`.
fn vl_config(s: &Settings, table: &McsTable) -> Result<HarqConfig, CliError> {
    let r1 = table.rate(0);
    let primary: Vec<f64> = table.rates().iter().map(|r| r1 / r).collect();
    let min = *primary.last().expect("non-empty");
    let aux: Vec<f64> = VL_AUX.iter().copied().filter(|l| *l < min).collect();
    HarqConfig::variable_length(s.k, primary, aux).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone)]
struct Row {
    snr_db: f64,
    scheme: Scheme,
    combining: Option<CombiningType>,
    source: Option<RegionSource>,
    throughput: f64,
    ci: Option<f64>,
    blocks: Option<u64>,
}

fn evaluate(scheme: Scheme, snr_index: usize, snr_db: f64, s: &Settings, table: &McsTable) -> Result<Row, CliError> {
    let g = db_to_linear(snr_db);
    let combining = scheme_combining(scheme, s);
    let source = effective_source(scheme, s);
    let c = combining.unwrap_or(s.combining);
    let channel = || ChannelConfig::new(g, s.fading, point_seed(s.seed, scheme, snr_index));
    let mut row = Row {
        snr_db,
        scheme,
        combining,
        source,
        throughput: f64::NAN,
        ci: None,
        blocks: None,
    };
    match scheme {
        Scheme::Amc => {
            let r = regions(source.expect("regions"), c, s, table, g)?;
            row.throughput = amc_throughput(&r, table, g)?.value;
        }
        Scheme::HarqRr | Scheme::HarqIr => {
            let src = source.expect("regions");
            row.throughput = match (src, s.fading) {
                (RegionSource::Optimized, FadingMode::Fast) => fast_optimize_regions(s.k, c, table, g)?.1.value,
                (_, FadingMode::Fast) => fast_throughput(&regions(src, c, s, table, g)?, s.k, c, table, g)?.value,
                (_, FadingMode::Slow) => slow_throughput(&regions(src, c, s, table, g)?, s.k, c, table, g)?.value,
            };
        }
        Scheme::TwoRoundBound => {
            let r = regions(source.expect("regions"), c, s, table, g)?;
            row.throughput = two_round_bound(&r, table, g)?;
        }
        Scheme::PacketDrop => {
            let r = regions(source.expect("regions"), c, s, table, g)?;
            let h = HarqConfig::packet_drop(c, s.k)?;
            let sim = simulate_packet_drop(&r, &h, table, &channel()?, s.mc_blocks)?;
            row.throughput = sim.throughput;
            row.ci = Some(sim.ci_half_width);
            row.blocks = Some(sim.blocks);
        }
        Scheme::VariableLength => {
            let sim = simulate_vl(&vl_config(s, table)?, table, &channel()?, s.mc_blocks)?;
            row.throughput = sim.throughput;
            row.ci = Some(sim.ci_half_width);
            row.blocks = Some(sim.blocks);
        }
    }
    if !row.throughput.is_finite() {
        return Err(CliError::Numerical(format!(
            "{} at {snr_db} dB produced {}",
            scheme.name(),
            row.throughput
        )));
    }
    Ok(row)
}

fn check_schemes(s: &Settings, table: &McsTable) -> Result<(), CliError> {
    if s.schemes.contains(&Scheme::VariableLength) {
        if s.fading != FadingMode::Fast {
            return config("vl-harq is simulated in fast fading only");
        }
        vl_config(s, table)?;
    }
    Ok(())
}

fn write_output(s: &Settings, text: &str) -> Result<(), CliError> {
    match &s.output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "stdout".into(),
                source,
            }),
    }
}

/// Sweep points in output order: by scheme name, then SNR.
fn points(s: &Settings) -> Vec<(Scheme, usize, f64)> {
    let mut schemes = s.schemes.clone();
    schemes.sort_by_key(|x| x.name());
    schemes.dedup();
    schemes
        .iter()
        .flat_map(|sc| s.snr_db.iter().enumerate().map(move |(i, db)| (*sc, i, *db)))
        .collect()
}

/// Writes the throughput table. Points that fail are left out of the
/// output and reported as a numerical failure once the rest is written.
pub fn run_sweep(s: &Settings) -> Result<(), CliError> {
    let table = s.table()?;
    check_schemes(s, &table)?;
    let results: Vec<Result<Row, CliError>> = points(s)
        .par_iter()
        .map(|(sc, i, db)| evaluate(*sc, *i, *db, s, &table))
        .collect();
    let a_tilde = sig12(s.a_tilde);
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    sig12(row.snr_db),
                    row.scheme.name(),
                    row.combining.map_or("", |c| c.name()),
                    a_tilde,
                    s.k,
                    row.source.map_or("none", |r| r.name()),
                    sig12(row.throughput),
                    row.ci.map_or(String::new(), sig12),
                    row.blocks.map_or(String::new(), |b| b.to_string()),
                ));
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    write_output(s, &out)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(failures.join("; ")))
    }
}

fn threshold_rows(scheme: Scheme, snr_db: f64, s: &Settings, table: &McsTable) -> Result<Vec<String>, CliError> {
    let g = db_to_linear(snr_db);
    let c = scheme_combining(scheme, s).unwrap_or(s.combining);
    let r = regions(effective_source(scheme, s).expect("regions"), c, s, table, g)?;
    let head = format!("{},{}", sig12(snr_db), scheme.name());
    let mut rows = Vec::with_capacity(table.len());
    for l in 0..table.len() {
        let gamma = match r.kind() {
            RegionKind::ThresholdVector => sig12(linear_to_db(r.thresholds().expect("vector")[l])),
            RegionKind::IntervalUnions => r
                .intervals(l)
                .iter()
                .map(|i| format!("{}..{}", sig12(linear_to_db(i.lo)), sig12(linear_to_db(i.hi))))
                .collect::<Vec<_>>()
                .join(";"),
        };
        rows.push(format!("{head},{},{gamma},{}", l + 1, u8::from(r.is_degenerate(l))));
    }
    Ok(rows)
}

/// Writes the decision regions behind every scheme that uses them.
pub fn run_thresholds(s: &Settings) -> Result<(), CliError> {
    let table = s.table()?;
    let pts: Vec<(Scheme, usize, f64)> = points(s)
        .into_iter()
        .filter(|p| p.0 != Scheme::VariableLength)
        .collect();
    if pts.is_empty() {
        return config("none of the selected schemes uses decision regions");
    }
    let results: Vec<Result<Vec<String>, CliError>> = pts
        .par_iter()
        .map(|(sc, _, db)| threshold_rows(*sc, *db, s, &table))
        .collect();
    let mut out = String::from(THRESHOLD_HEADER);
    out.push('\n');
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rows) => {
                for row in rows {
                    out.push_str(&row);
                    out.push('\n');
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    write_output(s, &out)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(failures.join("; ")))
    }
}
