use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signvar_cli::commands::{self, Outcome, SweepRequest};
use signvar_cli::config::{Overrides, RunConfig};
use signvar_cli::output::write_all;
use signvar_cli::{CliError, EXIT_EMPTY_CSQ};

/// Sign-restricted SVAR inference: Bonferroni bands, credible bands, Monte Carlo.
#[derive(Parser, Debug)]
#[command(name = "signvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    alpha1: Option<f64>,
    #[arg(long, global = true)]
    alpha2: Option<f64>,
    #[arg(long, global = true)]
    nq: Option<usize>,
    #[arg(long, global = true)]
    nz: Option<usize>,
    #[arg(long, global = true)]
    nlambda: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// OLS estimate and lag-order table.
    Estimate,
    /// Plug-in sets and Bonferroni bands for every target.
    Bands {
        /// Also fill the Bayesian credible-band columns.
        #[arg(long)]
        bayes: bool,
    },
    /// Bayesian credible bands only.
    Bayes,
    /// Monte Carlo coverage experiment.
    Mc {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long = "T", alias = "t")]
        t: Option<usize>,
        #[arg(long)]
        nsim: Option<usize>,
        /// α₁ values with α₁ + α₂ held fixed.
        #[arg(long, value_delimiter = ',')]
        sweep_alpha1: Option<Vec<f64>>,
        /// α₂ values with α₁ held fixed.
        #[arg(long, value_delimiter = ',')]
        sweep_alpha2: Option<Vec<f64>>,
    },
    /// Population identified sets of a Monte Carlo design.
    PopulationSets {
        #[command(flatten)]
        design: DesignArgs,
    },
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// 1, 2, 3, 4 or exp3.
    #[arg(long)]
    design: Option<String>,
    /// Restricted horizons of designs 2 to 4: "1" or "0-4".
    #[arg(long)]
    horizons: Option<String>,
}

fn apply_design(cfg: &mut RunConfig, d: &DesignArgs) {
    if let Some(id) = &d.design {
        cfg.mc.design = id.clone();
    }
    if let Some(h) = &d.horizons {
        cfg.mc.horizons = Some(h.clone());
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: g.seed,
        alpha1: g.alpha1,
        alpha2: g.alpha2,
        n_q: g.nq,
        n_z: g.nz,
        n_lambda: g.nlambda,
        out: g.out.clone(),
    });
    let outcome: Outcome = match &cli.command {
        Command::Estimate => {
            cfg.validate()?;
            commands::estimate(&cfg)?
        }
        Command::Bands { bayes } => {
            cfg.validate()?;
            commands::bands_command(&cfg, *bayes)?
        }
        Command::Bayes => {
            cfg.validate()?;
            commands::bayes_command(&cfg)?
        }
        Command::Mc { design, t, nsim, sweep_alpha1, sweep_alpha2 } => {
            apply_design(&mut cfg, design);
            cfg.mc.t = t.unwrap_or(cfg.mc.t);
            cfg.mc.n_sim = nsim.unwrap_or(cfg.mc.n_sim);
            cfg.validate()?;
            let sweep = SweepRequest { alpha1: sweep_alpha1.clone(), alpha2: sweep_alpha2.clone() };
            commands::mc_command(&cfg, &sweep)?
        }
        Command::PopulationSets { design } => {
            apply_design(&mut cfg, design);
            cfg.validate()?;
            commands::population_command(&cfg)?
        }
    };
    let paths = write_all(&cfg.output.dir, &outcome.artifacts, outcome.manifest)?;
    println!("{}", outcome.summary);
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(if outcome.empty_csq { EXIT_EMPTY_CSQ } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
