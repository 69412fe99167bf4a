//! Command-line driver: scenario runs, fee tables, trace analysis, and
//! one-time address derivation.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sealedbid::anonymity::{self, geometric_buckets, BucketSpec, Window};
use sealedbid::auction::Salt;
use sealedbid::fees::{FeeSchedule, MarketParams};
use sealedbid::ledger::{derive_onetime_address, Address};
use sealedbid::scenario::{fee_tables, run_scenario, Scenario};
use sealedbid::trace::{read_trace_file, write_trace_csv};

#[derive(Parser)]
#[command(name = "sealedbid", version, about = "Sealed-bid auction simulator with fund binding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and print the report as JSON.
    Run(RunArgs),
    /// Print the bundled gas/fee tables and aggregates.
    Fees(FeesArgs),
    /// Filter a transfer trace for candidate one-time addresses and bucket
    /// them by balance.
    Analyze(AnalyzeArgs),
    /// Derive the one-time address for a salt.
    DeriveAddress(DeriveArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the gas price in gwei.
    #[arg(long)]
    gas_price: Option<f64>,
    /// Override the ETH/USD rate.
    #[arg(long)]
    eth_usd: Option<f64>,
    /// Also write report.json and trace.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeesArgs {
    /// Gas price in gwei.
    #[arg(long, default_value_t = 45.0)]
    gas_price: f64,
    /// ETH/USD rate.
    #[arg(long, default_value_t = 3200.0)]
    eth_usd: f64,
    /// Gas schedule JSON file overriding the bundled figures.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace CSV file; `.gz` is decompressed transparently.
    #[arg(long)]
    trace: PathBuf,
    /// First block of the bidding window.
    #[arg(long)]
    from: u64,
    /// Last block of the bidding window.
    #[arg(long)]
    to: u64,
    /// Use geometric buckets `LO,HI,RATIO` (ETH) instead of the default table.
    #[arg(long, value_name = "LO,HI,RATIO")]
    geometric: Option<String>,
    /// Write histogram.csv and summary.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveArgs {
    /// Auction id in the salt.
    #[arg(long)]
    auction_id: u64,
    /// Bidder revealing address in the salt (0x-hex).
    #[arg(long)]
    bidder: Address,
    /// 32 random salt bytes (0x-hex).
    #[arg(long)]
    random: String,
    /// Deploying auction contract address (0x-hex).
    #[arg(long)]
    deployer: Address,
    /// KECCAK-256 of the fund-binding bytecode (0x-hex).
    #[arg(long)]
    bytecode_hash: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), String> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Fees(args) => cmd_fees(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::DeriveAddress(args) => cmd_derive(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let json = fs::read_to_string(&args.config)
        .map_err(|e| format!("reading {}: {e}", args.config.display()))?;
    let mut scenario = Scenario::from_json(&json).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(gas_price) = args.gas_price {
        scenario.market.gas_price_gwei = gas_price;
    }
    if let Some(eth_usd) = args.eth_usd {
        scenario.market.eth_usd = eth_usd;
    }
    let report = run_scenario(&scenario).map_err(|e| e.to_string())?;
    print!("{}", report.to_json());

    if let Some(dir) = args.out {
        fs::create_dir_all(&dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
        fs::write(dir.join("report.json"), report.to_json())
            .map_err(|e| format!("writing report.json: {e}"))?;
        // Re-run to recover the trace; the run is deterministic in the seed.
        let trace = trace_of(&scenario)?;
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).map_err(|e| e.to_string())?;
        fs::write(dir.join("trace.csv"), buf).map_err(|e| format!("writing trace.csv: {e}"))?;
        eprintln!("wrote report.json and trace.csv to {}", dir.display());
    }
    Ok(())
}

fn trace_of(scenario: &Scenario) -> Result<Vec<sealedbid::trace::TraceRecord>, String> {
    // The report does not carry the raw trace; replaying the scenario on a
    // scratch ledger does, byte for byte.
    sealedbid::scenario::run_scenario_with_trace(scenario)
        .map(|(_, trace)| trace)
        .map_err(|e| e.to_string())
}

fn cmd_fees(args: FeesArgs) -> Result<(), String> {
    let schedule = match args.schedule {
        Some(path) => {
            let json = fs::read_to_string(&path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            FeeSchedule::from_json(&json).map_err(|e| e.to_string())?
        }
        None => FeeSchedule::default_table(),
    };
    let market = MarketParams {
        gas_price_gwei: args.gas_price,
        eth_usd: args.eth_usd,
    };
    print!("{}", fee_tables(&schedule, &market));
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), String> {
    let trace = read_trace_file(&args.trace).map_err(|e| e.to_string())?;
    let window = Window::from_blocks(args.from, args.to).map_err(|e| e.to_string())?;
    if trace
        .first()
        .is_some_and(|first| first.block >= args.from)
    {
        eprintln!(
            "warning: trace starts inside the window; the first-receipt rule \
             needs pre-window history to be meaningful"
        );
    }
    let spec = match &args.geometric {
        Some(raw) => {
            let parts: Vec<&str> = raw.split(',').collect();
            if parts.len() != 3 {
                return Err("--geometric expects LO,HI,RATIO".to_string());
            }
            let lo: f64 = parts[0].trim().parse().map_err(|e| format!("LO: {e}"))?;
            let hi: f64 = parts[1].trim().parse().map_err(|e| format!("HI: {e}"))?;
            let ratio: f64 = parts[2].trim().parse().map_err(|e| format!("RATIO: {e}"))?;
            geometric_buckets(lo, hi, ratio).map_err(|e| e.to_string())?
        }
        None => BucketSpec::default_table(),
    };
    let summary = anonymity::analyze(&trace, &window, &spec).map_err(|e| e.to_string())?;

    let mut csv = Vec::new();
    anonymity::write_histogram_csv(&mut csv, &summary.histogram).map_err(|e| e.to_string())?;
    print!("{}", String::from_utf8_lossy(&csv));

    if let Some(dir) = args.out {
        fs::create_dir_all(&dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
        fs::write(dir.join("histogram.csv"), &csv)
            .map_err(|e| format!("writing histogram.csv: {e}"))?;
        let json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
        fs::write(dir.join("summary.json"), format!("{json}\n"))
            .map_err(|e| format!("writing summary.json: {e}"))?;
        eprintln!("wrote histogram.csv and summary.json to {}", dir.display());
    }
    Ok(())
}

fn cmd_derive(args: DeriveArgs) -> Result<(), String> {
    let random = parse_hex32(&args.random, "--random")?;
    let bytecode_hash = parse_hex32(&args.bytecode_hash, "--bytecode-hash")?;
    let salt = Salt {
        auction_id: args.auction_id,
        bidder_reveal_address: args.bidder,
        random,
    };
    let address = derive_onetime_address(args.deployer, &salt.salt32(), &bytecode_hash);
    println!("{address}");
    Ok(())
}

fn parse_hex32(raw: &str, flag: &str) -> Result<[u8; 32], String> {
    let stripped = raw.strip_prefix("0x").unwrap_or(raw);
    let bytes = hex::decode(stripped).map_err(|e| format!("{flag}: {e}"))?;
    bytes
        .try_into()
        .map_err(|_| format!("{flag}: expected 32 bytes"))
}
