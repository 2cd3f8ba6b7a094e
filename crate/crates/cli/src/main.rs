use std::path::PathBuf;
use std::process::ExitCode;

use bnmf_cli::run::{execute, run_experiment, Command, RunConfig};
use bnmf_cli::{Algorithm, CliError, CliResult, NoiseKind};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bnmf", version, about = "Quasi-Bayesian non-negative matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic Y = UVᵀ + E and write Y, M, U, V as CSV.
    Generate(Flags),
    /// Posterior mode by block coordinate descent.
    Map(Flags),
    /// Posterior mean by Gibbs sampling.
    Gibbs(Flags),
    /// Run one estimator over a grid of hyperprior rates b.
    Sweep(Flags),
    /// Evaluate the oracle bound at the generating factors.
    Bound(Flags),
    /// Run a JSON experiment file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Rank of the generating factors.
    #[arg(long)]
    rank: Option<usize>,
    /// Factorization width.
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Upper end of the uniform factor entries.
    #[arg(long)]
    entry_upper: Option<f64>,
    /// gaussian or uniform.
    #[arg(long)]
    noise: Option<String>,
    /// exponential | trunc-gauss:a=<x> | heavy-tail:zeta=<x>
    #[arg(long)]
    prior: Option<String>,
    /// gamma:b=<x> | inv-gamma:a=<x>,b=<x>
    #[arg(long)]
    hyperprior: Option<String>,
    #[arg(long, value_delimiter = ',')]
    b_grid: Option<Vec<f64>>,
    /// Estimator for sweep: map or gibbs.
    #[arg(long)]
    algorithm: Option<String>,
    /// MAP outer iterations or Gibbs iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Inverse temperature; defaults to 1/(4 sigma2).
    #[arg(long)]
    lambda: Option<f64>,
    /// Factor this CSV matrix instead of synthetic data.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Signal matrix to score an --input fit against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

impl Flags {
    fn into_config(self, command: Command) -> CliResult<RunConfig> {
        let mut cfg = RunConfig { command, out: self.out, ..RunConfig::default() };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        let spec = &mut cfg.spec;
        spec.m1 = self.m1.unwrap_or(spec.m1);
        spec.m2 = self.m2.unwrap_or(spec.m2);
        spec.r_true = self.rank.unwrap_or(spec.r_true);
        spec.k = self.k.unwrap_or(spec.k);
        spec.sigma2 = self.sigma2.unwrap_or(spec.sigma2);
        spec.entry_upper = self.entry_upper.unwrap_or(spec.entry_upper);
        if let Some(n) = self.noise {
            spec.noise = match n.as_str() {
                "gaussian" => NoiseKind::Gaussian,
                "uniform" => NoiseKind::Uniform,
                _ => return Err(CliError::usage("noise", format!("expected gaussian or uniform, got '{n}'"))),
            };
        }
        if let Some(p) = self.prior {
            cfg.prior = p;
        }
        if let Some(h) = self.hyperprior {
            cfg.hyperprior = h;
        }
        if let Some(g) = self.b_grid {
            cfg.b_grid = g;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = a.parse::<Algorithm>()?;
        }
        if let Some(n) = self.iters {
            cfg.map.max_outer = n;
            cfg.gibbs.n_iters = n;
            cfg.gibbs.burn_in = cfg.gibbs.burn_in.min(n / 2);
        }
        if let Some(b) = self.burn_in {
            cfg.gibbs.burn_in = b;
        }
        cfg.lambda = self.lambda;
        cfg.input = self.input;
        cfg.truth = self.truth;
        if cfg.map.max_outer == 0 {
            return Err(CliError::usage("iters", "must be positive"));
        }
        if cfg.gibbs.burn_in >= cfg.gibbs.n_iters {
            return Err(CliError::usage(
                "burn-in",
                format!("burn-in {} must be below iters {}", cfg.gibbs.burn_in, cfg.gibbs.n_iters),
            ));
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> CliResult<PathBuf> {
    let (command, flags) = match cli.command {
        Cmd::Run { config, out } => return run_experiment(&config, out.as_deref()),
        Cmd::Generate(f) => (Command::Generate, f),
        Cmd::Map(f) => (Command::Map, f),
        Cmd::Gibbs(f) => (Command::Gibbs, f),
        Cmd::Sweep(f) => (Command::Sweep, f),
        Cmd::Bound(f) => (Command::Bound, f),
    };
    let cfg = flags.into_config(command)?;
    execute(&cfg)?;
    Ok(cfg.out)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(out) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
