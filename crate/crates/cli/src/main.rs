// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Prints a report line. A closed stdout (e.g. piped into `head`) must not
/// abort a run before its outputs and manifest are written.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod config;
mod demo;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spirit_core::eval::Method;
use spirit_core::synthetic::Shape;

use crate::commands::SweepKind;
use crate::config::{config_err, parse_snr_list, ConfigError, Overrides, RunConfig, Snr};

/// ISRF estimation from a measured and a reference spectrum: synthetic data,
/// dictionary building, estimation and experiment sweeps.
#[derive(Parser, Debug)]
#[command(name = "spirit", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Base seed for noise and replicates.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reuse finished sweep cells logged by an earlier run with the same config.
    #[arg(long, global = true)]
    resume: bool,
    /// Method to run; repeat for several. One of gauss, supergauss, omp-svd,
    /// omp-ksvd, lasso-svd, lasso-ksvd.
    #[arg(long = "method", global = true, value_parser = parse_method)]
    methods: Vec<Method>,
    /// Comma-separated SNR list in dB (`inf` for noise-free). Sets the SNR
    /// sweep levels; the first value is also the level of synthesized
    /// measurements for `estimate` and the K sweep.
    #[arg(long = "snr-db", global = true, value_parser = parse_snr_levels, allow_hyphen_values = true)]
    snr_db: Option<SnrList>,
    /// Sparsity of the sparse methods.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Window width in pixels (even); the window holds n_obs + 1 samples.
    #[arg(long = "n-obs", global = true)]
    n_obs: Option<usize>,
    /// Dictionary atom count.
    #[arg(long = "n-d", global = true)]
    n_d: Option<usize>,
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Clone, Debug)]
struct SnrList(Vec<Snr>);

fn parse_snr_levels(s: &str) -> Result<SnrList, String> {
    parse_snr_list(s).map(SnrList)
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: spirit_core::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Interpolate the truth ISRFs and write noise-free and noisy measurements.
    Synth,
    /// Build dictionaries and print their singular value spectra.
    Dict,
    /// Estimate ISRFs with every configured method.
    Estimate,
    /// Run an experiment sweep.
    Sweep {
        #[arg(value_enum)]
        kind: SweepArg,
    },
    /// Write a synthetic input bundle and config into `--out`.
    Demo(DemoArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SweepArg {
    /// Mean error against sparsity K.
    K,
    /// Mean error per method and SNR over noise replicates.
    Snr,
    /// Mean error over N_obs × N_D.
    Grid,
    /// Uniform against mixed dictionaries on scene-distorted ISRFs.
    Scene,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Number of wavelength centres.
    #[arg(long, default_value_t = 256)]
    centers: usize,
    /// Offsets run over ±n_half·Δ, giving 2·n_half + 1 samples.
    #[arg(long = "n-half", default_value_t = 64)]
    n_half: usize,
    /// ISRF family: dipped or gaussian.
    #[arg(long, default_value = "dipped")]
    shape: Shape,
    /// Scale of the shape change across the band.
    #[arg(long)]
    drift: Option<f64>,
    /// Number of held-out training ISRFs.
    #[arg(long, default_value_t = 40)]
    training: usize,
}

fn overrides(g: &GlobalArgs) -> Overrides {
    Overrides {
        out: g.out.clone(),
        seed: g.seed,
        methods: g.methods.clone(),
        snr_db: g.snr_db.as_ref().map(|l| l.0.clone()),
        k: g.k,
        n_obs: g.n_obs,
        n_d: g.n_d,
    }
}

fn load_config(g: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let path = g.config.as_ref().ok_or_else(|| config_err("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&overrides(g));
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if g.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(g.jobs).build_global()?;
    }
    let jobs = rayon::current_num_threads();
    match cli.command {
        Command::Demo(a) => {
            let dir = g.out.clone().ok_or_else(|| config_err("demo needs --out"))?;
            let defaults = demo::DemoOptions::default();
            let opts = demo::DemoOptions {
                seed: g.seed.unwrap_or(defaults.seed),
                centers: a.centers,
                n_half: a.n_half,
                shape: a.shape,
                drift: a.drift.unwrap_or(defaults.drift),
                training: a.training,
                n_obs: g.n_obs.unwrap_or(defaults.n_obs),
                ..defaults
            };
            let path = demo::write_demo(&dir, &opts)?;
            say!("wrote {}", path.display());
        }
        Command::Synth => commands::synth(&load_config(g)?, jobs)?,
        Command::Dict => commands::dict(&load_config(g)?, jobs)?,
        Command::Estimate => commands::estimate(&load_config(g)?, jobs)?,
        Command::Sweep { kind } => {
            let kind = match kind {
                SweepArg::K => SweepKind::K,
                SweepArg::Snr => SweepKind::Snr,
                SweepArg::Grid => SweepKind::Grid,
                SweepArg::Scene => SweepKind::Scene,
            };
            commands::sweep(&load_config(g)?, kind, g.resume, jobs)?;
        }
    }
    Ok(())
}

/// 2 configuration, 3 data format, 4 numerical failure, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use spirit_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::InvalidArgument(_) | E::OutOfRange(_) => 2,
                E::Format { .. }
                | E::Io(_)
                | E::Json(_)
                | E::InvalidIsrfValue(_)
                | E::InvalidKnots(_)
                | E::ExtrapolationRequired(_)
                | E::DomainTooSmall(_)
                | E::OutOfDomain { .. } => 3,
                E::ZeroIsrf | E::RankDeficient { .. } | E::NoSupport | E::DegenerateInit(_) => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.global.log).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
