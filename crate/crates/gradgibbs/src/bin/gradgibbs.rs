use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gradgibbs::cli::{report, run, ExperimentConfig};
use gradgibbs::lattice::AffineMap;
use gradgibbs::potential::{bound_constants, c_integral, GrowthConstants};

#[derive(Parser)]
#[command(name = "gradgibbs", version, about = "Lattice gradient-Gibbs laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config and append run records.
    Run {
        /// path to the JSON experiment config
        config: PathBuf,
        /// override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// worker threads for independent tasks
        #[arg(long, default_value_t = num_workers())]
        workers: usize,
        /// re-run tasks already present in the record index
        #[arg(long)]
        force: bool,
    },
    /// Summarize a records directory.
    Report {
        /// directory with records.jsonl
        dir: PathBuf,
    },
    /// Print the constants table for given growth parameters.
    CheckConstants(ConstantsArgs),
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long = "C", default_value_t = 2.0)]
    big_c: f64,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    r0: f64,
    /// operator norm of the deformation used in B(L)
    #[arg(long = "L", default_value_t = 1.0)]
    l_norm: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
}

fn num_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> gradgibbs::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            force,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let summary = run(&cfg, force, workers)?;
            for (name, ok) in &summary.verdicts {
                println!("[{}] {name}", if *ok { "PASS" } else { "FAIL" });
            }
            println!("records: {}", summary.records_dir.display());
            if summary.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Report { dir } => {
            let text = report(&dir)?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckConstants(a) => {
            let g = GrowthConstants {
                c: a.c,
                p: a.p,
                big_c: a.big_c,
                r: a.r,
            };
            g.validate()?;
            let mut mat = vec![0.0; a.m * a.d];
            for k in 0..a.m.min(a.d) {
                mat[k * a.d + k] = a.l_norm;
            }
            let l = AffineMap::linear(a.m, a.d, mat);
            let consts = bound_constants(&g, a.m, a.d, a.r0, &l);
            println!("c({}, {}) = {:.10}", a.p, a.m, c_integral(a.p, a.m));
            println!("b  = {:.10}", consts.lower);
            println!("B(L) = {:.10}", consts.subadditivity);
            println!("D  = {:.10}", consts.tightness);
            Ok(ExitCode::SUCCESS)
        }
    }
}
