use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;

use config::RunConfig;
use nv_relaxo_core::Family;

/// NV-center relaxometry simulation and inference.
#[derive(Debug, Parser)]
#[command(name = "nv-relaxo", version, about)]
struct Cli {
    /// JSON run configuration (or a manifest from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Outputs do not depend on this value.
    #[arg(long, global = true, env = "NV_RELAXO_WORKERS")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, short, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a bare-surface ensemble T1 curve.
    SimulateBackground {
        /// Surface spin density, nm⁻².
        #[arg(long)]
        sigma_surf: Option<f64>,
        #[arg(long)]
        n_nv: Option<usize>,
        #[arg(long)]
        noise_sd: Option<f64>,
        /// Last dark time, s.
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Fit a T1 curve CSV.
    Fit {
        curve: PathBuf,
        #[arg(long, default_value = "biexp", value_parser = parse_family)]
        family: Family,
    },
    /// Density and coefficient inference.
    Infer {
        #[command(subcommand)]
        kind: InferKind,
    },
    /// Conditional rate-change density and single-complex probability map.
    ProbabilityMap {
        /// Streptavidin density, nm⁻².
        #[arg(long)]
        sigma_sa: Option<f64>,
        #[arg(long)]
        n_nv: Option<usize>,
    },
    /// Compare ensemble rate estimators over a label-density grid.
    Sensitivity {
        #[arg(long)]
        n_nv: Option<usize>,
        #[arg(long)]
        noise_sd: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum InferKind {
    /// Surface spin density from an ensemble T1 curve.
    Surface {
        #[arg(long)]
        curve: PathBuf,
    },
    /// Surface noise coefficient from single-NV background rates.
    CSurf {
        /// Text file with one rate (s⁻¹) per line.
        #[arg(long)]
        rates: PathBuf,
    },
    /// Label spacing from an ensemble rate change.
    LabelSpacing {
        /// s⁻¹
        #[arg(long)]
        delta_gamma: f64,
        /// s⁻¹
        #[arg(long, default_value_t = 0.0)]
        sd: f64,
    },
    /// Streptavidin density from single-NV rate changes.
    SaDensity {
        /// Text file with one rate change (s⁻¹) per line.
        #[arg(long)]
        observed: PathBuf,
        /// Rate-change cutoff, s⁻¹.
        #[arg(long)]
        cutoff: Option<f64>,
    },
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: nv_relaxo_core::Error| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    NonConvergence(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::NonConvergence(m) => write!(f, "not converged: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<nv_relaxo_core::Error> for CliError {
    fn from(e: nv_relaxo_core::Error) -> Self {
        use nv_relaxo_core::Error as E;
        match e {
            E::Sampling(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    match &cli.command {
        Command::SimulateBackground {
            sigma_surf,
            n_nv,
            noise_sd,
            t_max,
        } => {
            set(&mut cfg.surface.sigma_surf, sigma_surf);
            set(&mut cfg.ensemble.n_nv, n_nv);
            set(&mut cfg.ensemble.noise_sd, noise_sd);
            if t_max.is_some() {
                cfg.ensemble.t_max = *t_max;
            }
        }
        Command::ProbabilityMap { sigma_sa, n_nv } => {
            set(&mut cfg.single_nv.sigma_sa, sigma_sa);
            set(&mut cfg.single_nv.n_nv, n_nv);
        }
        Command::Sensitivity { n_nv, noise_sd } => {
            set(&mut cfg.ensemble.n_nv, n_nv);
            set(&mut cfg.ensemble.noise_sd, noise_sd);
        }
        Command::Infer {
            kind: InferKind::SaDensity { cutoff, .. },
        } => set(&mut cfg.inference.sa_cutoff, cutoff),
        _ => {}
    }
    Ok(cfg)
}

fn set<T: Copy>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = *v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(CliError::Input("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    let out = commands::Output::new(&cli.out)?;
    match cli.command {
        Command::SimulateBackground { .. } => commands::simulate_background(&cfg, &out),
        Command::Fit { curve, family } => commands::fit(&cfg, &out, &curve, family),
        Command::Infer { kind } => commands::infer(&cfg, &out, &kind),
        Command::ProbabilityMap { .. } => commands::probability_map(&cfg, &out),
        Command::Sensitivity { .. } => commands::sensitivity(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nv-relaxo: {e}");
            ExitCode::from(e.code())
        }
    }
}
