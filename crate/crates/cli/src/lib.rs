//! `msinv` batch front-end: config ingestion, solver orchestration and
//! reproducible run directories.

mod commands;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use msinv_core::config::RunConfig;
use msinv_core::lyapunov_perron::LpConfig;
use msinv_core::spectral_problem::Side;
use msinv_core::Error as CoreError;

use output::{sha256_hex, RunDir, RunManifest, Versions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GAP: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_OTHER: i32 = 1;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "MSINV_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "msinv", version, about = "Mean-square invariant manifolds by Lyapunov-Perron iteration")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo ensemble size.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "msinv-out")]
    pub out: PathBuf,
    /// Run even when the gap condition fails; reports are marked uncertified.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Unstable,
    Stable,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Unstable => Side::Unstable,
            SideArg::Stable => Side::Stable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefineParameter {
    Dt,
    NSamples,
    TBack,
    Lambda,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gap constants eta and delta with itemized terms.
    CheckGap,
    /// Unstable manifold graph h^u(x, tau).
    SolveUnstable {
        /// Anchor as comma-separated modal coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchor: Option<Vec<f64>>,
        /// Also write the converged ensemble to paths.bin.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Stable set graph h^s(x, tau) and membership sweep.
    SolveStable {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchor: Option<Vec<f64>>,
        #[arg(long)]
        dump_paths: bool,
    },
    /// Distance of the flowed graph point from the graph at tau + t0.
    InvarianceTest {
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, value_enum, default_value = "unstable")]
        side: SideArg,
        /// Repeat over joint (dt, samples) refinement levels.
        #[arg(long)]
        refine: bool,
    },
    /// Regularization error of lambda R_lambda and the C_zeta constant.
    ResolventStudy,
    /// Emit the Neumann heat example as a problem file.
    ExamplePde {
        #[arg(long, default_value_t = 4)]
        modes: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        g0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        g1: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        g2: f64,
    },
    /// Refinement study of the unstable graph in one parameter.
    Refine {
        #[arg(long, value_enum)]
        parameter: RefineParameter,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckGap => "check-gap",
            Command::SolveUnstable { .. } => "solve-unstable",
            Command::SolveStable { .. } => "solve-stable",
            Command::InvarianceTest { .. } => "invariance-test",
            Command::ResolventStudy => "resolvent-study",
            Command::ExamplePde { .. } => "example-pde",
            Command::Refine { .. } => "refine",
        }
    }
}

/// Missing or unusable command-line input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit code for a failed run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::GapViolation { .. } => EXIT_GAP,
                CoreError::InvalidConfig(_)
                | CoreError::OrderingViolation(_)
                | CoreError::SpectralGapViolation { .. }
                | CoreError::NonzeroAtOrigin(_)
                | CoreError::DegenerateGap(_)
                | CoreError::KappaBelowVartheta { .. }
                | CoreError::GridMismatch(_)
                | CoreError::TruncationTooShort { .. }
                | CoreError::NoSeparation => EXIT_CONFIG,
                _ => EXIT_NONCONVERGENCE,
            };
        }
    }
    EXIT_OTHER
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
            if n == 0 {
                return Err(UsageError(format!("{WORKERS_ENV} must be positive")).into());
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn apply_overrides(cli: &Cli, solver: &mut LpConfig) {
    if let Some(s) = cli.seed {
        solver.seed = s;
    }
    if let Some(n) = cli.samples {
        solver.n_samples = n;
    }
    if let Some(dt) = cli.dt {
        solver.dt = dt;
    }
    solver.force |= cli.force;
}

/// Runs one subcommand and writes its run directory. Returns the exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let started = Instant::now();
    let mut dir = RunDir::create(&cli.out)?;
    let (code, hash, seed) = match &cli.command {
        Command::ExamplePde { modes, g0, g1, g2 } => {
            let mut solver = match &cli.config {
                Some(path) => RunConfig::load(path)?.solver,
                None => LpConfig::default(),
            };
            apply_overrides(cli, &mut solver);
            solver.validate()?;
            let key = serde_json::to_string(&(modes, g0, g1, g2, &solver))?;
            let code = commands::example_pde(&mut dir, *modes, [*g0, *g1, *g2], &solver)?;
            (code, sha256_hex(key.as_bytes()), solver.seed)
        }
        cmd => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| UsageError(format!("{} requires --config PATH", cmd.name())))?;
            let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
            apply_overrides(cli, &mut cfg.solver);
            cfg.validate()?;
            let hash = sha256_hex(serde_json::to_string(&cfg)?.as_bytes());
            let p = cfg.build()?;
            let seed = cfg.solver.seed;
            let ctx = commands::Ctx {
                cfg: &cfg,
                p,
                dir: &mut dir,
            };
            let code = match cmd {
                Command::CheckGap => commands::check_gap(ctx)?,
                Command::SolveUnstable { anchor, dump_paths } => {
                    commands::solve(ctx, Side::Unstable, anchor.clone(), *dump_paths)?
                }
                Command::SolveStable { anchor, dump_paths } => {
                    commands::solve(ctx, Side::Stable, anchor.clone(), *dump_paths)?
                }
                Command::InvarianceTest { t0, side, refine } => {
                    commands::invariance(ctx, (*side).into(), *t0, *refine)?
                }
                Command::ResolventStudy => commands::resolvent_study(ctx)?,
                Command::Refine { parameter, values } => {
                    commands::refine(ctx, *parameter, values.clone())?
                }
                Command::ExamplePde { .. } => unreachable!(),
            };
            (code, hash, seed)
        }
    };
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        config_hash: hash,
        seed,
        workers: rayon::current_num_threads(),
        versions: Versions {
            msinv_core: msinv_core::VERSION,
            msinv_cli: env!("CARGO_PKG_VERSION"),
        },
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: {
            let mut o = dir.outputs().to_vec();
            o.push("manifest.json".into());
            o
        },
    };
    dir.json("manifest.json", &manifest)?;
    eprintln!("wrote {}", dir.root().display());
    Ok(code)
}
