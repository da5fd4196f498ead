//! Command-line benchmark runner. Exit code 0 means the run completed
//! with all postconditions intact; failures report a machine-readable
//! category on stderr and a nonzero code.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semimg::bench::{emit_csv, run_adaptive, run_uniform, BenchConfig, CsvTable};

#[derive(Parser)]
#[command(
    name = "semimg",
    version,
    about = "Full multigrid solver benchmarks for semilinear elliptic problems"
)]
struct Cli {
    /// Seed consumed by the randomized sanity checks.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform-refinement convergence and timing run.
    Run {
        /// Plain `key = value` config file; explicit flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Problem name: example1 | example2 | example3 | example4.
        #[arg(long)]
        problem: Option<String>,
        /// Number of hierarchy levels.
        #[arg(long)]
        levels: Option<usize>,
        /// Cells per unit side of the base mesh.
        #[arg(long)]
        base: Option<usize>,
        /// V-cycles per correction step.
        #[arg(long)]
        m: Option<usize>,
        /// Correction steps per level.
        #[arg(long)]
        p: Option<usize>,
        /// 1-based level used as the correction space.
        #[arg(long = "coarse-index")]
        coarse_index: Option<usize>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adaptive-refinement run driven by the residual estimator.
    Adaptive {
        /// Plain `key = value` config file; explicit flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Problem name (defaults to example4).
        #[arg(long)]
        problem: Option<String>,
        /// Number of adaptive iterations.
        #[arg(long)]
        iters: Option<usize>,
        /// Doerfler marking fraction in (0, 1).
        #[arg(long = "theta-mark")]
        theta_mark: Option<f64>,
        /// Cells per unit side of the base mesh.
        #[arg(long)]
        base: Option<usize>,
        /// V-cycles per correction step.
        #[arg(long)]
        m: Option<usize>,
        /// Correction steps per level.
        #[arg(long)]
        p: Option<usize>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory receiving one mesh dump per iteration.
        #[arg(long = "dump-meshes")]
        dump_meshes: Option<PathBuf>,
    },
}

fn build_config(cli: &Cli) -> semimg::Result<BenchConfig> {
    let mut cfg = BenchConfig::default();
    match &cli.command {
        Command::Run {
            config,
            problem,
            levels,
            base,
            m,
            p,
            coarse_index,
            out,
        } => {
            if let Some(path) = config {
                cfg.apply_kv_file(path)?;
            }
            cfg.adaptive = false;
            if let Some(v) = problem {
                cfg.problem = v.clone();
            }
            if let Some(v) = levels {
                cfg.levels = *v;
            }
            if let Some(v) = base {
                cfg.base = *v;
            }
            if let Some(v) = m {
                cfg.m = *v;
            }
            if let Some(v) = p {
                cfg.p = *v;
            }
            if let Some(v) = coarse_index {
                cfg.coarse_index = *v;
            }
            if let Some(v) = out {
                cfg.out = Some(v.clone());
            }
        }
        Command::Adaptive {
            config,
            problem,
            iters,
            theta_mark,
            base,
            m,
            p,
            out,
            dump_meshes,
        } => {
            cfg.problem = "example4".into();
            if let Some(path) = config {
                cfg.apply_kv_file(path)?;
            }
            cfg.adaptive = true;
            if let Some(v) = problem {
                cfg.problem = v.clone();
            }
            if let Some(v) = iters {
                cfg.iterations = *v;
            }
            if let Some(v) = theta_mark {
                cfg.theta_mark = *v;
            }
            if let Some(v) = base {
                cfg.base = *v;
            }
            if let Some(v) = m {
                cfg.m = *v;
            }
            if let Some(v) = p {
                cfg.p = *v;
            }
            if let Some(v) = out {
                cfg.out = Some(v.clone());
            }
            if let Some(v) = dump_meshes {
                cfg.dump_meshes = Some(v.clone());
            }
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> semimg::Result<()> {
    let cfg = build_config(cli)?;
    let table: CsvTable = if cfg.adaptive {
        run_adaptive(&cfg)?
    } else {
        run_uniform(&cfg)?
    };
    match &cfg.out {
        Some(path) => {
            emit_csv(&table, path)?;
            eprintln!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        None => print!("{}", table.to_csv_string()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {}", err.category(), err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
