//! `oprg`: batch driver for the renormalization pipeline.

mod commands;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde::Serialize;

use oprg::rg::RGConfig;
use oprg::{Error, ModelConfig};

use commands::Context;
use rundir::{exit_code, RunDir};

#[derive(Parser, Debug, Serialize)]
#[command(name = "oprg", version, about = "Operator renormalization group on discretized atom-photon models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Model description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; defaults to `runs/<subcommand>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Coupling values (comma separated), overriding the config.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    g: Vec<f64>,
    /// Infrared cutoffs (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    sigma: Vec<f64>,
    /// Dilation factor of the RG step.
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Weight of the kernel norm.
    #[arg(long, global = true)]
    xi: Option<f64>,
    /// Highest perturbative order.
    #[arg(long, global = true)]
    orders: Option<usize>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Standard)]
    tolerance_profile: Profile,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
enum Command {
    /// Build the model and run the invariant suite.
    Validate,
    /// Run the RG to the ground-state energy and eigenvector.
    Rg,
    /// Rayleigh-Schroedinger coefficients and the sigma scan.
    Perturb,
    /// Compare RG-Cauchy and Rayleigh-Schroedinger coefficients.
    Match,
    /// Exact-diagonalization sweeps.
    Oracle,
    /// Tabulate E(alpha) at g = alpha^{3/2} with the coefficient pattern.
    AlphaDemo {
        #[arg(long, value_delimiter = ',', default_values_t = [0.005, 0.01, 0.02, 0.04, 0.08])]
        alpha: Vec<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Rg => "rg",
            Command::Perturb => "perturb",
            Command::Match => "match",
            Command::Oracle => "oracle",
            Command::AlphaDemo { .. } => "alpha-demo",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum Profile {
    /// Library defaults.
    Standard,
    /// Tighter energy and kernel termination.
    Strict,
    /// Looser termination for quick scans.
    Fast,
}

impl Profile {
    fn apply(self, config: &mut RGConfig) {
        match self {
            Profile::Standard => {}
            Profile::Strict => {
                config.energy_tol = 1e-12;
                config.kernel_tol = 1e-10;
            }
            Profile::Fast => {
                config.energy_tol = 1e-8;
                config.kernel_tol = 1e-6;
            }
        }
    }
}

fn rg_config(cli: &Cli) -> oprg::Result<RGConfig> {
    let mut config = RGConfig::default();
    if let Some(rho) = cli.rho {
        config.rho = rho;
        config.epsilon0 = rho / 16.0;
    }
    if let Some(xi) = cli.xi {
        config.xi = xi;
    }
    cli.tolerance_profile.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: &Cli, run: RunDir) -> oprg::Result<u8> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let config = ModelConfig::load(path)?;
    run.write_text("config.toml", &config.to_toml())
        .map_err(|e| Error::Config(e.to_string()))?;
    let rg = rg_config(cli)?;
    let ctx = Context { config, rg, g: cli.g.clone(), sigma: cli.sigma.clone(), orders: cli.orders, run };
    match &cli.command {
        Command::Validate => commands::validate(&ctx),
        Command::Rg => commands::rg(&ctx),
        Command::Perturb => commands::perturb(&ctx),
        Command::Match => commands::matching(&ctx),
        Command::Oracle => commands::oracle(&ctx),
        Command::AlphaDemo { alpha } => commands::alpha_demo(&ctx, alpha),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    let run = match RunDir::create(&out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cannot create run directory {}: {e}", out.display());
            return ExitCode::from(1);
        }
    };
    if let Ok(file) = run.log_file() {
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
            .target(env_logger::Target::Pipe(Box::new(file)))
            .init();
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
        }
    }
    let _ = run.write_json("command.json", &cli);
    info!("oprg {name} -> {}", out.display());
    let record_dir = RunDir { path: run.path.clone() };
    match dispatch(&cli, run) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            error!("{name} failed: {err}");
            eprintln!("error [{}]: {err}", err.root().class());
            let _ = record_dir.write_error(name, &err);
            ExitCode::from(exit_code(&err))
        }
    }
}
