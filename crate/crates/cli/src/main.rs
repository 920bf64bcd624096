use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freerep_cli::commands;
use freerep_cli::report::{Options, Probe};
use freerep_cli::CliError;
use freerep_core::Tolerances;

#[derive(Parser)]
#[command(name = "freerep", version, about = "Multiplicative representations of free groups from matrix systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Residual acceptance threshold, in [1e-12, 1e-4].
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Largest sphere radius for coefficient sums (at most 14).
    #[arg(long, default_value_t = 12)]
    nmax: usize,
    /// Seed for the probe vector and instance searches.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a system file against the matrix-system rules.
    Validate {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Rescale to transfer radius one and attach the fixed forms.
    Normalize {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full pipeline and write a report per input.
    Classify {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sphere sums s_n as CSV (header `n,s_n`), with a JSON mirror next to --out.
    Series {
        path: PathBuf,
        /// Edge `x|y` carrying the first basis vector; a seeded vector otherwise.
        #[arg(long)]
        vector: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Bundled example: endpoint-f2, random-ai or random-bi.
    Demo {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn options(c: &Common, probe: Probe) -> Result<Options, CliError> {
    if !(1e-12..=1e-4).contains(&c.tol) {
        return Err(CliError::Usage(format!("--tol {} is outside [1e-12, 1e-4]", c.tol)));
    }
    if c.nmax > 14 {
        return Err(CliError::Usage(format!("--nmax {} is above 14", c.nmax)));
    }
    Ok(Options {
        tol: Tolerances::with_residual(c.tol),
        nmax: c.nmax,
        seed: c.seed,
        probe,
    })
}

fn configure_threads() {
    if let Some(n) = std::env::var("FREEREP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    match cli.cmd {
        Cmd::Validate { path, tol } => commands::validate(&path, tol),
        Cmd::Normalize { path, out, common } => commands::normalize(&path, out.as_deref(), &options(&common, Probe::SeededW0)?),
        Cmd::Classify { paths, out, out_dir, common } => {
            commands::classify(&paths, out.as_deref(), out_dir.as_deref(), &options(&common, Probe::SeededW0)?)
        }
        Cmd::Series { path, vector, out, common } => {
            let probe = vector.map_or(Probe::SeededW0, Probe::Edge);
            commands::series(&path, out.as_deref(), &options(&common, probe)?)
        }
        Cmd::Demo { name, out, common } => commands::demo(&name, out.as_deref(), &options(&common, Probe::SeededW0)?),
    }
}

fn main() -> ExitCode {
    configure_threads();
    match run(Cli::parse()) {
        Ok(o) => {
            print!("{}", o.stdout);
            ExitCode::from(o.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
