mod commands;
mod config;
mod error;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

const DEFAULT_OUT: &str = "escapepath_out";

#[derive(Parser, Debug)]
#[command(name = "escapepath", version, about = "Most probable escape paths for weakly non-gradient SDEs")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Built-in model name.
    #[arg(long, global = true)]
    model: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Locate and classify the attractor and saddle.
    Equilibria,
    /// Reversed-flow heteroclinic connection from the attractor to the saddle.
    Het {
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Most probable escape path from the Euler–Lagrange connection.
    Mpep {
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        svg: bool,
    },
    /// First-order corrections in mu and their diagnostics.
    Correction {
        #[arg(long)]
        mu_check: Option<f64>,
    },
    /// Error of the first-order approximation over a list of mu values.
    Sweep {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
        #[arg(long)]
        svg: bool,
    },
    /// Monte Carlo escape ensemble.
    Simulate {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Freidlin–Wentzell action of a path.
    Action {
        /// CSV path `t,x1,..,xn`; defaults to the escape path at `--mu`.
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.model = m.clone();
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    match &cli.command {
        Command::Het { mu } | Command::Action { mu, .. } => {
            if let Some(m) = mu {
                cfg.mu = *m;
            }
        }
        Command::Mpep { mu, svg } => {
            if let Some(m) = mu {
                cfg.mu = *m;
            }
            cfg.svg |= *svg;
        }
        Command::Correction { mu_check } => {
            if let Some(m) = mu_check {
                cfg.melnikov.mu_check = *m;
            }
        }
        Command::Sweep { mu, svg } => {
            if let Some(m) = mu {
                cfg.sweep.mus = m.clone();
            }
            cfg.svg |= *svg;
        }
        Command::Simulate { eps, mu, n, seed, dt, tmax } => {
            let s = &mut cfg.sde;
            if let Some(v) = eps {
                s.eps = *v;
            }
            if let Some(v) = mu {
                s.mu = *v;
            }
            if let Some(v) = n {
                s.n_paths = *v;
            }
            if let Some(v) = seed {
                s.seed = *v;
            }
            if let Some(v) = dt {
                s.dt = *v;
            }
            if let Some(v) = tmax {
                s.t_max = *v;
            }
        }
        Command::Equilibria => {}
    }
    if cfg.out.is_none() {
        cfg.out = Some(DEFAULT_OUT.into());
    }
    let model = escapepath::model::model_by_name(&cfg.model)?;
    cfg.sde.resolve(&model)?;
    cfg.bvp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(cfg.melnikov.mu_check.is_finite() && cfg.melnikov.mu_check != 0.0) {
        return Err(CliError::Usage("mu_check must be finite and non-zero".into()));
    }
    if !cfg.mu.is_finite() {
        return Err(CliError::Usage("mu must be finite".into()));
    }
    Ok(cfg)
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let out_dir = PathBuf::from(cfg.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()));
    prepare_out_dir(&out_dir, cli.force)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let outputs = match &cli.command {
        Command::Equilibria => commands::equilibria(&cfg),
        Command::Het { .. } => commands::het(&cfg),
        Command::Mpep { .. } => commands::mpep(&cfg),
        Command::Correction { .. } => commands::correction(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
        Command::Simulate { .. } => commands::simulate_cmd(&cfg, cli.threads),
        Command::Action { path, .. } => commands::action_cmd(&cfg, path.as_ref()),
    };
    fs::write(out_dir.join("resolved_config.txt"), cfg.to_toml())?;
    let outputs = outputs?;
    outputs.write_all(&out_dir)?;
    print!("{}", outputs.stdout);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
