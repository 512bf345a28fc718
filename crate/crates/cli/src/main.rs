//! osl: dyadic systems, weight constants, sparse domination and mixed
//! weak-type verification on finite measure spaces.
//!
//! Exit codes: 0 pass, 1 malformed config (with a field-path diagnostic),
//! 2 inequality-budget failure, 3 hypothesis failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::RunContext;
use config::load_config;

#[derive(Parser)]
#[command(name = "osl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Cap the worker pool.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Level grid as lo:hi:n (overrides the config grid).
    #[arg(long, value_parser = parse_lambda_grid)]
    lambda_grid: Option<(f64, f64, usize)>,
    /// Ratio budget for pass/fail (overrides the config budget).
    #[arg(long)]
    budget: Option<f64>,
}

fn parse_lambda_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:n".into());
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("hi: {e}"))?;
    let n: usize = parts[2].parse().map_err(|e| format!("n: {e}"))?;
    if !(lo > 0.0 && hi > lo && n > 0) {
        return Err("needs 0 < lo < hi and n > 0".into());
    }
    Ok((lo, hi, n))
}

#[derive(Subcommand)]
enum Command {
    /// Build dyadic systems and export them with invariant checks.
    DyadicBuild(CommonArgs),
    /// All five weight constants for a weight file on a space file.
    WeightConstants {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        weight: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the constructive sparse domination and emit the certificate.
    SparseDominate(CommonArgs),
    /// Evaluate a mixed weak-type inequality over a level grid.
    VerifyMixed(CommonArgs),
    /// Fit the quantitative lemma constants on the bundled corpus.
    LemmaSuite(CommonArgs),
    /// Hörmander-class diagnostics for a kernel.
    Hormander(CommonArgs),
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run_with_config(
    args: &CommonArgs,
    run: impl FnOnce(&config::ExperimentConfig, &RunContext) -> anyhow::Result<i32>,
) -> i32 {
    init_threads(args.threads);
    let (cfg, text) = match load_config(&args.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out_dir) {
        eprintln!("error: creating {}: {e}", args.out_dir.display());
        return 1;
    }
    let ctx = RunContext {
        out_dir: &args.out_dir,
        config_hash: config::config_hash(&text),
        lambda_override: args.lambda_grid,
        budget_override: args.budget,
        seed_override: args.seed,
    };
    match run(&cfg, &ctx) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::DyadicBuild(args) => run_with_config(args, commands::dyadic_build),
        Command::WeightConstants { space, weight, p, q, out_dir, threads } => {
            init_threads(*threads);
            if let Err(e) = std::fs::create_dir_all(out_dir) {
                eprintln!("error: creating {}: {e}", out_dir.display());
                return ExitCode::from(1);
            }
            let ctx = RunContext {
                out_dir,
                config_hash: config::config_hash(&format!(
                    "{}:{}:{p}:{q}",
                    space.display(),
                    weight.display()
                )),
                lambda_override: None,
                budget_override: None,
                seed_override: None,
            };
            match commands::weight_constants_cmd(space, weight, *p, *q, &ctx) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
        Command::SparseDominate(args) => run_with_config(args, commands::sparse_dominate_cmd),
        Command::VerifyMixed(args) => run_with_config(args, commands::verify_mixed),
        Command::LemmaSuite(args) => run_with_config(args, commands::lemma_suite),
        Command::Hormander(args) => run_with_config(args, commands::hormander),
    };
    ExitCode::from(code as u8)
}
