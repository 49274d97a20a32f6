//! `amc-harq`: throughput sweeps, decision-region tables and the
//! acceptance suite from the command line.

mod config;
mod error;
mod run;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amc_harq::verify::{run_criteria, VerifyOptions, CRITERIA};

use crate::config::Settings;
use crate::error::{config, CliError};

/// Worker threads for the sweep; the default uses every core.
const THREADS_ENV: &str = "AMC_HARQ_THREADS";

#[derive(Parser)]
#[command(
    name = "amc-harq",
    version,
    about = "AMC and HARQ throughput over block-fading Rayleigh channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Throughput per scheme and average SNR, as CSV.
    Sweep(SweepArgs),
    /// Decision regions per scheme and average SNR, as CSV.
    Thresholds(SweepArgs),
    /// Run the acceptance property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<String>,
    /// Comma-separated: amc, harq-rr, harq-ir, harq-2r-bound, pd-harq, vl-harq.
    #[arg(long)]
    schemes: Option<String>,
    /// PER decay; `inf` selects the step model.
    #[arg(long, allow_hyphen_values = true)]
    a_tilde: Option<String>,
    /// Average SNR range `lo:step:hi` in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// `fast` or `slow`.
    #[arg(long)]
    fading: Option<String>,
    /// amc-exact, amc-closed-form, per-target or optimized.
    #[arg(long)]
    regions: Option<String>,
    /// Maximum number of HARQ rounds.
    #[arg(long)]
    k: Option<String>,
    /// Blocks per Monte Carlo point.
    #[arg(long)]
    mc_blocks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<String>,
    /// Comma-separated increasing rates in bits/symbol.
    #[arg(long)]
    rates: Option<String>,
    /// `rr` or `ir`, for schemes without their own combining.
    #[arg(long)]
    combining: Option<String>,
    /// Target loss probability of the per-target regions.
    #[arg(long)]
    p_loss: Option<String>,
    /// ARQ rounds of the per-target regions.
    #[arg(long)]
    arq_rounds: Option<String>,
}

impl SweepArgs {
    fn settings(self) -> Result<Settings, CliError> {
        let flags = [
            ("schemes", self.schemes),
            ("a-tilde", self.a_tilde),
            ("snr-db", self.snr_db),
            ("fading", self.fading),
            ("regions", self.regions),
            ("k", self.k),
            ("mc-blocks", self.mc_blocks),
            ("seed", self.seed),
            ("output", self.output),
            ("rates", self.rates),
            ("combining", self.combining),
            ("p-loss", self.p_loss),
            ("arq-rounds", self.arq_rounds),
        ];
        Settings::load(self.config.as_deref(), &flags)
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated criterion numbers; all when absent.
    #[arg(long)]
    criteria: Option<String>,
    #[arg(long, default_value_t = 1_000_000)]
    mc_blocks: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn verify(args: VerifyArgs) -> Result<bool, CliError> {
    let ids: Vec<usize> = match args.criteria {
        Some(list) => list
            .split(',')
            .map(|s| match s.trim().parse::<usize>() {
                Ok(id) if (1..=CRITERIA).contains(&id) => Ok(id),
                _ => config(format!("criteria: `{s}` is not in 1..={CRITERIA}")),
            })
            .collect::<Result<_, _>>()?,
        None => (1..=CRITERIA).collect(),
    };
    if args.mc_blocks < amc_harq::simulator::MIN_BLOCKS {
        return config(format!(
            "mc-blocks must be at least {}",
            amc_harq::simulator::MIN_BLOCKS
        ));
    }
    let options = VerifyOptions {
        mc_blocks: args.mc_blocks,
        seed: args.seed,
    };
    let reports = run_criteria(&ids, &options);
    for r in &reports {
        println!("{}", r.line());
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = match v.trim().parse() {
            Ok(n) if n > 0 => n,
            _ => return config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Sweep(a) => a.settings().and_then(|s| run::run_sweep(&s)).map(|_| true),
        Command::Thresholds(a) => a.settings().and_then(|s| run::run_thresholds(&s)).map(|_| true),
        Command::Verify(a) => verify(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        // a failed criterion is a numerical outcome
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("amc-harq: {e}");
            e.exit_code()
        }
    }
}
