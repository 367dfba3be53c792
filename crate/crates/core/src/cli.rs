//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration or validation errors
//! (including usage errors), 3 when a run would exceed the ML memory cap.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::channel::{Channel, ChannelSpec, Nats};
use crate::decoders::{DecoderId, DEFAULT_MU};
use crate::pattern::{min_shift_distance, PatternError};
use crate::sim::simulation_pattern;
use crate::sim::{
    run_sweep, run_trial, write_csv, write_json, NuMode, SimError, SweepCell, SweepConfig, TrialConfig, TrialSetup,
    DEFAULT_ML_CAP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "framesync", version, about = "Frame synchronization over discrete memoryless channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-input divergences from the noise row and the synchronization threshold.
    Threshold(ChannelArgs),
    /// Build a sync pattern and report its shift distance.
    Pattern(PatternArgs),
    /// Run one trial and report each decoder's verdict.
    Trial(TrialArgs),
    /// Monte Carlo sweep over an (N, alpha) grid, written as CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct ChannelArgs {
    /// Channel file (TOML with input_alphabet, output_alphabet, star, matrix).
    #[arg(long, value_name = "PATH")]
    pub channel: Option<PathBuf>,
    /// Binary symmetric channel with this crossover probability; noise symbol "0".
    #[arg(long, value_name = "P")]
    pub bsc: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PatternArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Pattern length N.
    #[arg(long = "n", short = 'n')]
    pub n: usize,
    /// Grid period K.
    #[arg(long = "k", short = 'k', default_value_t = 8)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuModeArg {
    Uniform,
    BlockAligned,
}

impl From<NuModeArg> for NuMode {
    fn from(m: NuModeArg) -> Self {
        match m {
            NuModeArg::Uniform => NuMode::Uniform,
            NuModeArg::BlockAligned => NuMode::BlockAligned,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrialArgs {
    #[command(flatten)]
    pub pattern: PatternArgs,
    /// Asynchronism exponent in nats; A = max(1, round(e^(alpha N))).
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Typicality tolerance.
    #[arg(long, default_value_t = DEFAULT_MU)]
    pub mu: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated decoders: typicality, sliding-ml, block-ml.
    #[arg(long, value_delimiter = ',', default_value = "typicality,sliding-ml")]
    pub decoders: Vec<DecoderId>,
    #[arg(long, value_enum, default_value_t = NuModeArg::Uniform)]
    pub nu_mode: NuModeArg,
    /// Longest output sequence ML decoders may hold in memory.
    #[arg(long, default_value_t = DEFAULT_ML_CAP)]
    pub ml_cap: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Comma-separated pattern lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Comma-separated asynchronism exponents (nats).
    #[arg(long, value_delimiter = ',', required = true)]
    pub alpha_list: Vec<f64>,
    #[arg(long = "k", short = 'k', default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_MU)]
    pub mu: f64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "typicality")]
    pub decoders: Vec<DecoderId>,
    #[arg(long, value_enum, default_value_t = NuModeArg::Uniform)]
    pub nu_mode: NuModeArg,
    #[arg(long, default_value_t = DEFAULT_ML_CAP)]
    pub ml_cap: u64,
    /// Worker threads (0 = one per core). Never changes the output.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long, short = 'o', value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Also write the records as JSON here.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Fill wall_time_s; makes output vary between runs.
    #[arg(long)]
    pub record_timing: bool,
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("write failed: {e}"))
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::MlSkipped { .. } => Failure {
                code: EXIT_CAP,
                message: format!("{e}; rerun with --decoders typicality or raise --ml-cap"),
            },
            other => Failure::config(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Threshold(a) => cmd_threshold(a, out, err),
        Command::Pattern(a) => cmd_pattern(a, out, err),
        Command::Trial(a) => cmd_trial(a, out, err),
        Command::Sweep(a) => cmd_sweep(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn log_config<T: Serialize>(err: &mut dyn Write, command: &str, args: &T) -> CmdResult {
    let json = serde_json::to_string(args).map_err(|e| Failure::config(e.to_string()))?;
    writeln!(err, "config {command}: {json}")?;
    Ok(())
}

fn load_channel(args: &ChannelArgs) -> Result<Channel, Failure> {
    match (&args.channel, args.bsc) {
        (Some(path), _) => Channel::from_file(path).map_err(|e| Failure::config(e.to_string())),
        (None, Some(p)) => Channel::try_from(ChannelSpec::bsc(p)).map_err(|e| Failure::config(format!("--bsc {p}: {e}"))),
        (None, None) => Err(Failure::config("one of --channel or --bsc is required")),
    }
}

pub fn cmd_threshold(args: &ChannelArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    log_config(err, "threshold", args)?;
    let channel = load_channel(args)?;
    writeln!(out, "input\tdivergence_nats")?;
    for (x, d) in channel.divergences().into_iter().enumerate() {
        let tag = if x == channel.star() { "\t(noise)" } else { "" };
        writeln!(out, "{}\t{d}{tag}", channel.input_label(x))?;
    }
    let t = channel.sync_threshold();
    writeln!(out, "threshold_nats\t{}", t.alpha)?;
    writeln!(out, "x_bar\t{}", channel.input_label(t.x_bar))?;
    if t.alpha == Nats::Finite(0.0) {
        writeln!(err, "warning: threshold is zero; every input looks like noise and no pattern can be located")?;
    }
    Ok(())
}

pub fn cmd_pattern(args: &PatternArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    log_config(err, "pattern", args)?;
    let channel = load_channel(&args.channel)?;
    note_infinite_threshold(&channel, err)?;
    let pattern = simulation_pattern(&channel, args.n, args.k).map_err(pattern_failure)?;
    let (dist, shift) = min_shift_distance(&pattern);
    let degree = pattern.construction().expect("grid pattern").degree;
    writeln!(out, "{}", pattern.render())?;
    writeln!(
        out,
        "N={} K={} m={} stars={} min_shift_distance={} at_shift={}",
        pattern.len(),
        args.k,
        degree,
        pattern.star_count(),
        dist,
        shift
    )?;
    Ok(())
}

fn note_infinite_threshold(channel: &Channel, err: &mut dyn Write) -> CmdResult {
    if channel.sync_threshold().alpha.is_infinite() {
        writeln!(err, "note: threshold is infinite; using the grid pattern around the most divergent input")?;
    }
    Ok(())
}

fn pattern_failure(e: PatternError) -> Failure {
    Failure::config(e.to_string())
}

pub fn cmd_trial(args: &TrialArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    log_config(err, "trial", args)?;
    let channel = load_channel(&args.pattern.channel)?;
    note_infinite_threshold(&channel, err)?;
    let pattern = simulation_pattern(&channel, args.pattern.n, args.pattern.k).map_err(pattern_failure)?;
    let mut config = TrialConfig::new(args.alpha, pattern.len(), args.mu, args.seed, args.nu_mode.into())?;
    config.ml_cap = args.ml_cap;
    let setup = TrialSetup::new(&channel, &pattern, args.mu)?;
    let outcome = run_trial(&setup, &config, &args.decoders)?;

    writeln!(out, "N={} K={} alpha={} A={} seed={}", pattern.len(), args.pattern.k, args.alpha, config.a, args.seed)?;
    writeln!(out, "nu={}", outcome.nu)?;
    writeln!(out, "decoder\tdeclared_start\tstop_time\tresult")?;
    for v in &outcome.verdicts {
        let show = |t: Option<u64>| t.map_or_else(|| "none".to_string(), |t| t.to_string());
        let result = match outcome.miss(v) {
            None => "success",
            Some(crate::sim::Miss::Early) => "early",
            Some(crate::sim::Miss::Late) => "late",
            Some(crate::sim::Miss::NoDetection) => "no-detection",
        };
        writeln!(out, "{}\t{}\t{}\t{result}", v.decoder, show(v.declared_start), show(v.stop_time))?;
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    log_config(err, "sweep", args)?;
    let channel = load_channel(&args.channel)?;
    let grid: Vec<SweepCell> = args
        .n_list
        .iter()
        .flat_map(|&n| args.alpha_list.iter().map(move |&alpha| SweepCell { n, alpha }))
        .collect();
    if grid.is_empty() {
        return Err(Failure::config("empty grid"));
    }
    // Open outputs before the (possibly long) run so bad paths fail fast.
    let open = |p: &PathBuf| {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", p.display())))
    };
    let csv_file = args.output.as_ref().map(open).transpose()?;
    let json_file = args.json.as_ref().map(open).transpose()?;

    let cfg = SweepConfig {
        k: args.k,
        mu: args.mu,
        trials: args.trials,
        seed: args.seed,
        decoders: args.decoders.clone(),
        nu_mode: args.nu_mode.into(),
        ml_cap: args.ml_cap,
        workers: args.workers,
        record_timing: args.record_timing,
    };
    let report = run_sweep(&channel, &grid, &cfg)?;

    for s in &report.skipped {
        let names: Vec<&str> = s.decoders.iter().map(|d| d.name()).collect();
        writeln!(err, "skipped N={} alpha={} [{}]: {}", s.n, s.alpha, names.join(","), s.reason)?;
    }
    match csv_file {
        Some(f) => {
            write_csv(&report.records, f)?;
            write_summary(&report.records, out)?;
        }
        None => {
            write_csv(&report.records, &mut *out)?;
            write_summary(&report.records, err)?;
        }
    }
    if let Some(f) = json_file {
        write_json(&report.records, f)?;
    }
    Ok(())
}

fn write_summary(records: &[crate::sim::SweepRecord], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "{:>6} {:>8} {:>12} {:<11} {:>7} {:>7} {:>6} {:>6} {:>6} {:>10}", "N", "alpha", "A", "decoder", "trials", "errors", "early", "late", "none", "rate±ci95")?;
    for r in records {
        writeln!(
            w,
            "{:>6} {:>8} {:>12} {:<11} {:>7} {:>7} {:>6} {:>6} {:>6} {:.4}±{:.4}",
            r.n, r.alpha, r.a, r.decoder.name(), r.trials, r.errors, r.early, r.late, r.no_detections, r.error_rate, r.ci95_halfwidth
        )?;
    }
    Ok(())
}
