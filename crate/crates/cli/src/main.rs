mod commands;
mod config;
mod plot;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Args, Debug)]
struct Options {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot next to each CSV table.
    #[arg(long)]
    plot: bool,
    /// Override a config value, e.g. `--set ring.t=0.97`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Why a run stopped; each maps to one exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Usage(String),
    Config(String),
    Numerical(String),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::NotConverged(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(d) => write!(f, "error: usage: {d}"),
            Failure::Config(d) => write!(f, "error: config: {d}"),
            Failure::Numerical(d) => write!(f, "error: numerical: {d}"),
            Failure::NotConverged(d) => write!(f, "error: fit: {d}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "splitring", version, about = "Backscatter-split micro-ring resonator model")]
struct Invocation {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Forward/backward transmission over one free spectral range.
    Spectrum(Options),
    /// Complex bus, ring and loss fields over one free spectral range.
    Fields(Options),
    /// Heralding rate and efficiency against coupling.
    Herald(Options),
    /// Metrics along one parameter axis.
    Sweep(Options),
    /// Best bus-ring coupling for an objective.
    Optimize(Options),
    /// Fit model parameters to a measured spectrum.
    Fit(Options),
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SPLITRING_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SPLITRING_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size worker pool: {e}")))
}

fn run() -> Result<String, Failure> {
    let inv = match Invocation::try_parse() {
        Ok(inv) => inv,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return Err(Failure::Usage(first));
        }
    };
    configure_threads()?;
    let (name, opts) = match &inv.command {
        Sub::Spectrum(o) => ("spectrum", o),
        Sub::Fields(o) => ("fields", o),
        Sub::Herald(o) => ("herald", o),
        Sub::Sweep(o) => ("sweep", o),
        Sub::Optimize(o) => ("optimize", o),
        Sub::Fit(o) => ("fit", o),
    };
    let cfg = config::parse_config(&opts.config, &opts.set)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = commands::Context { config: cfg, out_dir, plot: opts.plot };
    commands::execute(name, &ctx)
}

fn main() -> ExitCode {
    match run() {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
