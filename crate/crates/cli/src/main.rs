use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cyclemix::experiments::{run, Command, ExperimentConfig, Format, KRule};
use cyclemix::Error;

#[derive(Parser, Debug)]
#[command(name = "cyclemix", version, about = "Mixing of lazy symmetric random walks on Z/pZ")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug, Clone)]
enum Cmd {
    /// Full report for one generating set.
    Analyze(Flags),
    /// Uniformly random generating sets at one modulus.
    Random(Flags),
    /// Cut-off check for the power-of-two walk.
    Power2(Flags),
    /// Mixing-to-relaxation ratio of the circle heat kernel.
    Tau0(Flags),
    /// The power-of-two cut-off constant.
    C0(Flags),
    /// TV distance between the k-dimensional walk and its Gaussian limit.
    Clt(Flags),
    /// Monte Carlo TV of the lattice heat kernel.
    Theta(Flags),
    /// Random ensembles over a grid of moduli.
    Sweep(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fmt {
    Json,
    Csv,
}

#[derive(clap::Args, Debug, Clone)]
struct Flags {
    /// Modulus, or a comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    p: Vec<u64>,
    /// Half-set size, or `logp_over_loglogp`.
    #[arg(long, default_value = "1")]
    k: String,
    /// Positive half of the generating set, e.g. `1,5,12`.
    #[arg(long)]
    half: Option<String>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated TV thresholds; defaults to 1/e.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    /// Comma-separated tail radii.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    rho: Vec<f64>,
    /// Comma-separated step counts for `clt`.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    /// Diffusion time for `theta`.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Fmt,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse() -> (Command, Flags) {
    match Cli::parse().command {
        Cmd::Analyze(f) => (Command::Analyze, f),
        Cmd::Random(f) => (Command::Random, f),
        Cmd::Power2(f) => (Command::Power2, f),
        Cmd::Tau0(f) => (Command::Tau0, f),
        Cmd::C0(f) => (Command::C0, f),
        Cmd::Clt(f) => (Command::Clt, f),
        Cmd::Theta(f) => (Command::Theta, f),
        Cmd::Sweep(f) => (Command::Sweep, f),
    }
}

fn real_main() -> Result<(), Error> {
    let (command, flags) = parse();
    let config = ExperimentConfig {
        command,
        p: flags.p,
        k: flags.k.parse::<KRule>()?,
        half: flags.half,
        trials: flags.trials,
        seed: flags.seed,
        eps: if flags.eps.is_empty() { ExperimentConfig::new(command).eps } else { flags.eps },
        mc_samples: flags.mc_samples,
        rho: flags.rho,
        n: flags.n,
        t: flags.t,
        format: match flags.format {
            Fmt::Json => Format::Json,
            Fmt::Csv => Format::Csv,
        },
        out: flags.out.as_ref().map(|p| p.display().to_string()),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = flags.jobs {
        if j == 0 {
            return Err(Error::Invalid("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let output = pool.install(|| run(&config))?;
    let text = output.render(config.format)?;
    match &flags.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}
