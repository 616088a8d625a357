//! `rcsbench`: run random-circuit benchmarks and related experiments from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "rcsbench",
    version,
    about = "Random circuit sampling benchmarks on simulated noisy qubits"
)]
struct Cli {
    /// Caps the worker thread count (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noisy RCS benchmark: estimator decays and fitted noise rates.
    Benchmark(BenchmarkArgs),
    /// Exact spin-model overlaps and the first-order fidelity table.
    Spinmodel(SpinmodelArgs),
    /// Relaxation, Ramsey and RCS runs recovering a correlated dephasing rate.
    VirtualExp(VirtualArgs),
    /// Simultaneous two-qubit randomized benchmarking.
    Rb(RbArgs),
    /// Cross-circuit variance of the first-order fidelity term.
    Variance(VarianceArgs),
    /// Sample bitstrings from one random circuit.
    Sample(SampleArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset such as `density-t1t2`; an unknown name lists the available ones.
    #[arg(long)]
    preset: Option<String>,
    /// Number of qubits.
    #[arg(long)]
    n: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mcwf,
    Density,
    Sampling,
}

#[derive(Args, Debug, Clone)]
struct SimulationArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Trajectories per circuit (samples per circuit for the sampling backend).
    #[arg(long)]
    trajectories: Option<usize>,
    /// Circuits per depth.
    #[arg(long)]
    circuits: Option<usize>,
    /// Depths as `a:b` or a comma-separated list.
    #[arg(long)]
    depths: Option<String>,
    /// Fit window `a:b`.
    #[arg(long)]
    fit_range: Option<String>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    sim: SimulationArgs,
    /// Noise family: none, t1t2, pauli-x, corr-xx, weight-nm1.
    #[arg(long)]
    noise: Option<String>,
    /// Effective noise rate for `--noise`.
    #[arg(long, default_value_t = 0.05)]
    enr: f64,
}

#[derive(Args, Debug)]
struct SpinmodelArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Largest depth tabulated.
    #[arg(long, default_value_t = 60)]
    l_max: usize,
    /// Pauli labels, one per support qubit.
    #[arg(long, default_value = "X")]
    pauli: String,
    /// Comma-separated support qubits.
    #[arg(long, default_value = "0")]
    support: String,
    /// Pauli-X error probability for the first-order table.
    #[arg(long, default_value_t = 0.001)]
    eps: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VirtualArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    sim: SimulationArgs,
    /// Correlated dephasing strength as a multiple of 0.02.
    #[arg(long, conflicts_with = "gamma3")]
    alpha: Option<f64>,
    #[arg(long)]
    gamma3: Option<f64>,
}

#[derive(Args, Debug)]
struct RbArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Random sequences per length.
    #[arg(long)]
    sequences: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GateSetArg {
    Haar2q,
    CnotHaar1q,
    Both,
}

#[derive(Args, Debug)]
struct VarianceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = GateSetArg::Both)]
    gate_set: GateSetArg,
    #[arg(long)]
    circuits: Option<usize>,
    #[arg(long)]
    d_max: Option<usize>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    depth: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = rcsbench::protocols::presets::DEFAULT_SEED)]
    seed: u64,
    /// Noise family; omitted means ideal sampling.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    enr: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Failure category, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, presets or configuration: exit 2.
    Config(anyhow::Error),
    /// Simulation or I/O failure: exit 1.
    Runtime(anyhow::Error),
}

impl Failure {
    /// Sorts library errors into configuration or runtime failures.
    pub fn from_lib(e: rcsbench::Error) -> Self {
        let mut root = &e;
        while let rcsbench::Error::Context { source, .. } = root {
            root = source;
        }
        match root {
            rcsbench::Error::InvalidArgument(_)
            | rcsbench::Error::Unsupported(_)
            | rcsbench::Error::DimensionMismatch { .. }
            | rcsbench::Error::Json(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

fn run(cli: Cli) -> CliResult<PathBuf> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Config(anyhow::anyhow!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Spinmodel(a) => commands::spinmodel(a),
        Command::VirtualExp(a) => commands::virtual_exp(a),
        Command::Rb(a) => commands::rb(a),
        Command::Variance(a) => commands::variance(a),
        Command::Sample(a) => commands::sample(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
