//! Settings from a `key=value` file overlaid with command-line flags.
//!
//! Keys are the long flag names without the leading dashes. Values from
//! flags and from the file go through the same parsers.

use std::collections::BTreeMap;
use std::fs;

use amc_harq::{CombiningType, Decay, FadingMode, McsTable};

use crate::error::{config, CliError};

pub const KEYS: &[&str] = &[
    "schemes",
    "a-tilde",
    "snr-db",
    "fading",
    "regions",
    "k",
    "mc-blocks",
    "seed",
    "output",
    "rates",
    "combining",
    "p-loss",
    "arq-rounds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Amc,
    HarqRr,
    HarqIr,
    TwoRoundBound,
    PacketDrop,
    VariableLength,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Amc => "amc",
            Scheme::HarqRr => "harq-rr",
            Scheme::HarqIr => "harq-ir",
            Scheme::TwoRoundBound => "harq-2r-bound",
            Scheme::PacketDrop => "pd-harq",
            Scheme::VariableLength => "vl-harq",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "amc" => Scheme::Amc,
            "harq-rr" => Scheme::HarqRr,
            "harq-ir" => Scheme::HarqIr,
            "harq-2r-bound" => Scheme::TwoRoundBound,
            "pd-harq" => Scheme::PacketDrop,
            "vl-harq" => Scheme::VariableLength,
            other => return config(format!("unknown scheme `{other}`")),
        })
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Scheme::PacketDrop | Scheme::VariableLength)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSource {
    AmcExact,
    AmcClosedForm,
    PerTarget,
    Optimized,
}

impl RegionSource {
    pub fn name(self) -> &'static str {
        match self {
            RegionSource::AmcExact => "amc-exact",
            RegionSource::AmcClosedForm => "amc-closed-form",
            RegionSource::PerTarget => "per-target",
            RegionSource::Optimized => "optimized",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub schemes: Vec<Scheme>,
    pub a_tilde: f64,
    /// Average SNRs in dB, increasing.
    pub snr_db: Vec<f64>,
    pub fading: FadingMode,
    pub regions: RegionSource,
    pub k: usize,
    pub mc_blocks: u64,
    pub seed: u64,
    pub output: Option<String>,
    pub rates: Vec<f64>,
    pub combining: CombiningType,
    pub p_loss: f64,
    pub arq_rounds: u32,
}

impl Settings {
    pub fn table(&self) -> Result<McsTable, CliError> {
        let decay = Decay::from_value(self.a_tilde).map_err(|e| CliError::Config(e.to_string()))?;
        McsTable::new(self.rates.clone(), decay).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` (if any) and applies `flags` on top.
    pub fn load(path: Option<&str>, flags: &[(&str, Option<String>)]) -> Result<Self, CliError> {
        let mut values = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| CliError::Io {
                    path: p.to_string(),
                    source,
                })?;
                parse_file(&text)?
            }
            None => BTreeMap::new(),
        };
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v.clone());
            }
        }
        Self::from_values(&values)
    }

    pub fn from_values(values: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let get = |k: &str| values.get(k).map(String::as_str);
        let s = Settings {
            schemes: match get("schemes") {
                Some(v) => list(v).map(Scheme::parse).collect::<Result<_, _>>()?,
                None => vec![Scheme::Amc, Scheme::HarqRr, Scheme::HarqIr],
            },
            a_tilde: get("a-tilde").map_or(Ok(4.0), |v| number("a-tilde", v))?,
            snr_db: parse_range(get("snr-db").unwrap_or("-10:1:30"))?,
            fading: match get("fading").unwrap_or("fast") {
                "fast" => FadingMode::Fast,
                "slow" => FadingMode::Slow,
                other => return config(format!("unknown fading `{other}`")),
            },
            regions: match get("regions").unwrap_or("amc-exact") {
                "amc-exact" => RegionSource::AmcExact,
                "amc-closed-form" => RegionSource::AmcClosedForm,
                "per-target" => RegionSource::PerTarget,
                "optimized" => RegionSource::Optimized,
                other => return config(format!("unknown region source `{other}`")),
            },
            k: get("k").map_or(Ok(4), |v| integer("k", v))? as usize,
            mc_blocks: get("mc-blocks").map_or(Ok(1_000_000), |v| integer("mc-blocks", v))?,
            seed: get("seed").map_or(Ok(0), |v| integer("seed", v))?,
            output: get("output").map(str::to_string),
            rates: match get("rates") {
                Some(v) => list(v).map(|r| number("rates", r)).collect::<Result<_, _>>()?,
                None => (1..=5).map(|l| 0.75 * l as f64).collect(),
            },
            combining: match get("combining").unwrap_or("ir") {
                "rr" => CombiningType::Rr,
                "ir" => CombiningType::Ir,
                other => return config(format!("unknown combining `{other}`")),
            },
            p_loss: get("p-loss").map_or(Ok(0.01), |v| number("p-loss", v))?,
            arq_rounds: get("arq-rounds").map_or(Ok(1), |v| integer("arq-rounds", v))? as u32,
        };
        if s.schemes.is_empty() {
            return config("no schemes selected");
        }
        if s.k == 0 {
            return config("k must be at least 1");
        }
        if s.schemes.iter().any(|x| x.is_monte_carlo()) && s.mc_blocks < amc_harq::simulator::MIN_BLOCKS {
            return config(format!(
                "mc-blocks must be at least {} for Monte Carlo schemes",
                amc_harq::simulator::MIN_BLOCKS
            ));
        }
        s.table()?;
        Ok(s)
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn number(key: &str, v: &str) -> Result<f64, CliError> {
    match v.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a number"))),
    }
}

fn integer(key: &str, v: &str) -> Result<u64, CliError> {
    v.trim()
        .replace('_', "")
        .parse::<u64>()
        .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

/// `lo:step:hi`, inclusive of `hi` up to rounding.
pub fn parse_range(v: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = v.split(':').collect();
    let (lo, step, hi) = match parts.as_slice() {
        [x] => {
            let x = number("snr-db", x)?;
            (x, 1.0, x)
        }
        [lo, step, hi] => (number("snr-db", lo)?, number("snr-db", step)?, number("snr-db", hi)?),
        _ => return config(format!("snr-db: expected lo:step:hi, got `{v}`")),
    };
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return config(format!("snr-db: `{v}` needs a positive step and lo <= hi"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

/// Flat `key=value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config(format!("line {}: expected key=value", n + 1));
        };
        let k = k.trim();
        if !KEYS.contains(&k) {
            return config(format!("line {}: unknown key `{k}`", n + 1));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}
