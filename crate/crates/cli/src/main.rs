//! `callbound` — sharp bounds and simultaneous confidence intervals for
//! paired-callback audit data, as subcommands over one run configuration.
//!
//! A run is described by a flat `key = value` config file; every flag
//! overrides the corresponding key, and every command writes the resolved
//! configuration next to its artifacts. Outputs are byte-identical across
//! reruns with the same configuration: one root seed drives all random
//! subsystems through fixed derivation rules, and all floats are printed
//! with 17 significant digits.
//!
//! Exit codes: 0 success, 2 bad configuration or data, 3 solver failure,
//! 4 specification-test rejection, 5 I/O failure.

mod commands;
mod config;
mod error;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use callbound::{Direction, IntervalSides};
use clap::{Parser, Subcommand, ValueEnum};

use commands::ConstraintKind;
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "callbound",
    version,
    about = "Bounds and confidence intervals for paired-callback experiments"
)]
struct Cli {
    /// Run configuration file (`key = value` lines); flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Paired applications per job.
    #[arg(long, global = true, value_name = "L")]
    l: Option<u32>,

    /// Propensity grid resolution (points per axis).
    #[arg(long, global = true, value_name = "K")]
    k: Option<usize>,

    /// Input count CSV with header `job_id,callbacks_a,callbacks_b`.
    #[arg(long, global = true, value_name = "PATH")]
    input: Option<PathBuf>,

    /// Directory for artifacts; created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Estimand clause (repeatable); replaces the configured list.
    #[arg(long = "estimand", global = true, value_name = "CLAUSE")]
    estimand: Vec<String>,

    /// Simultaneous miscoverage level in (0, 1).
    #[arg(long, global = true, value_name = "ALPHA")]
    alpha: Option<f64>,

    /// Slack-level source: bootstrap | chi2 | fixed:<value>.
    #[arg(long, global = true, value_name = "SOURCE")]
    kappa_source: Option<String>,

    /// Bootstrap replicates.
    #[arg(long, global = true, value_name = "B")]
    bootstrap_b: Option<u32>,

    /// Root seed for all random subsystems.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Worker threads; 0 means one per core.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Grid resolutions for bound-curve, comma-separated.
    #[arg(long, global = true, value_name = "K1,K2,...")]
    k_sweep: Option<String>,

    /// Simulation atoms, `p_a,p_b:weight` clauses separated by `;`.
    #[arg(long, global = true, value_name = "ATOMS")]
    sim_atoms: Option<String>,

    /// Jobs to draw in simulate.
    #[arg(long, global = true, value_name = "N")]
    sim_n: Option<u64>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Project the empirical pattern distribution onto the model set.
    Fit,
    /// Bootstrap the projection criterion and calibrate the slack level.
    Bootstrap,
    /// One sharp bound for a single estimand.
    Bound {
        #[arg(long, value_enum, default_value_t = DirectionArg::Lower)]
        direction: DirectionArg,
        #[arg(long, value_enum, default_value_t = ConstraintArg::Slack)]
        constraint: ConstraintArg,
        /// Slack level; shorthand for kappa_source = fixed:<value>.
        #[arg(long, value_name = "KAPPA")]
        kappa: Option<f64>,
    },
    /// Bound-versus-slack curves, one CSV per estimand and grid size.
    BoundCurve {
        #[arg(long, value_enum, default_value_t = DirectionArg::Lower)]
        direction: DirectionArg,
        /// Single slack level instead of the default 40-point grid.
        #[arg(long, value_name = "KAPPA")]
        kappa: Option<f64>,
    },
    /// Simultaneous confidence intervals for the configured estimands.
    Ci {
        #[arg(long, value_enum, default_value_t = SidesArg::Both)]
        sides: SidesArg,
    },
    /// Draw a synthetic dataset from the configured support atoms.
    Simulate,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Lower,
    Upper,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Direction {
        match d {
            DirectionArg::Lower => Direction::Lower,
            DirectionArg::Upper => Direction::Upper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    /// Mixtures matching the empirical distribution exactly.
    Empirical,
    /// Mixtures matching the projected distribution exactly.
    Projected,
    /// Mixtures within criterion slack of the data.
    Slack,
}

impl From<ConstraintArg> for ConstraintKind {
    fn from(c: ConstraintArg) -> ConstraintKind {
        match c {
            ConstraintArg::Empirical => ConstraintKind::Empirical,
            ConstraintArg::Projected => ConstraintKind::Projected,
            ConstraintArg::Slack => ConstraintKind::Slack,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SidesArg {
    Both,
    Lower,
    Upper,
}

impl From<SidesArg> for IntervalSides {
    fn from(s: SidesArg) -> IntervalSides {
        match s {
            SidesArg::Both => IntervalSides::Both,
            SidesArg::Lower => IntervalSides::LowerOnly,
            SidesArg::Upper => IntervalSides::UpperOnly,
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| e.prefixed(&path.display().to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = cli.l {
        cfg.l = v;
    }
    if let Some(v) = cli.k {
        cfg.k = v;
    }
    if let Some(v) = &cli.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = &cli.output_dir {
        cfg.output_dir = v.clone();
    }
    if !cli.estimand.is_empty() {
        cfg.estimands = cli
            .estimand
            .iter()
            .map(|c| c.parse())
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = cli.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = &cli.kappa_source {
        cfg.kappa_source = v.parse()?;
    }
    if let Some(v) = cli.bootstrap_b {
        cfg.bootstrap_b = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = v;
    }
    if let Some(v) = &cli.k_sweep {
        cfg.k_sweep = v
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(|c| {
                c.parse::<usize>()
                    .map_err(|_| CliError::validation(format!("--k-sweep: bad grid size `{c}`")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = &cli.sim_atoms {
        cfg.sim_atoms = v
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = cli.sim_n {
        cfg.sim_n = v;
    }
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let cfg = resolve_config(&cli)?;
    cfg.validate()?;
    if cfg.threads > 0 {
        // The global pool can only be configured once per process; a
        // second initialization keeps the first setting, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    match cli.command {
        Cmd::Fit => commands::cmd_fit(&cfg),
        Cmd::Bootstrap => commands::cmd_bootstrap(&cfg),
        Cmd::Bound {
            direction,
            constraint,
            kappa,
        } => commands::cmd_bound(&cfg, direction.into(), constraint.into(), kappa),
        Cmd::BoundCurve { direction, kappa } => commands::cmd_curve(&cfg, direction.into(), kappa),
        Cmd::Ci { sides } => commands::cmd_ci(&cfg, sides.into()),
        Cmd::Simulate => commands::cmd_simulate(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
