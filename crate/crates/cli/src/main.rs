//! `morphevo` command-line runner.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors (reported
//! before any simulation starts), 2 when a run fails or a check does not pass.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use morphevo::evolution::{EvolutionConfig, GENERATIONS_CSV};
use morphevo::experiment::{read_config, run_grid, run_to_dir, ExperimentGrid, GRID_SUMMARY_CSV};
use morphevo::plot::{plot_grid, plot_run};
use morphevo::verify;

#[derive(Parser)]
#[command(name = "morphevo", version, about = "Evolve modular robot bodies and brains with lifetime learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the run seed (grid: the base seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one evolution and write its run directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Population snapshot interval in generations (0 = off).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Run every cell and repetition of an experiment grid.
    Grid {
        #[command(flatten)]
        common: Common,
    },
    /// Re-render the SVG plots of a run or grid directory.
    Plot {
        /// Run or grid directory.
        dir: PathBuf,
    },
    /// Run the built-in acceptance checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Also run the desk-scale grid check (several minutes).
        #[arg(long)]
        full: bool,
    },
}

/// An error together with the stage it happened in.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<morphevo::Error> for Failure {
    fn from(e: morphevo::Error) -> Self {
        match e {
            morphevo::Error::Config(_) | morphevo::Error::Parse { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn setup_workers(workers: Option<usize>) -> Result<(), Failure> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(Failure::Config("--workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

/// Creates `dir` and proves it is writable before any compute starts.
fn ensure_writable(dir: &Path) -> Result<(), Failure> {
    let probe = dir.join(".morphevo-write-test");
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&probe, b""))
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| Failure::Config(format!("output directory {} is not writable: {e}", dir.display())))
}

fn config_error(e: morphevo::Error) -> Failure {
    Failure::Config(e.to_string())
}

fn run(common: Common, checkpoint_every: usize) -> Result<(), Failure> {
    let mut config = match &common.config {
        Some(path) => read_config(path).map_err(config_error)?,
        None => EvolutionConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate().map_err(config_error)?;
    let out = common.out.unwrap_or_else(|| PathBuf::from(format!("runs/seed{}", config.seed)));
    ensure_writable(&out)?;
    setup_workers(common.workers)?;
    match run_to_dir(&config, &out, checkpoint_every)? {
        Some(summary) => println!(
            "run complete: {} evaluations, best fitness {:.4} (individual {})",
            summary.evaluations, summary.best_fitness, summary.best_id
        ),
        None => println!("{} already holds a completed run; left untouched", out.display()),
    }
    for path in plot_run(&out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn grid(common: Common) -> Result<(), Failure> {
    let mut grid = match &common.config {
        Some(path) => ExperimentGrid::from_toml_file(path).map_err(config_error)?,
        None => ExperimentGrid::default(),
    };
    if let Some(seed) = common.seed {
        grid.base_seed = seed;
    }
    if let Some(out) = common.out {
        grid.output_dir = out;
    }
    grid.validate().map_err(config_error)?;
    ensure_writable(&grid.output_dir)?;
    setup_workers(common.workers)?;
    let report = run_grid(&grid)?;
    println!(
        "grid complete: {} runs executed, {} already complete",
        report.executed, report.skipped
    );
    for path in plot_grid(&grid.output_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn plot(dir: &Path) -> Result<(), Failure> {
    let written = if dir.join(GRID_SUMMARY_CSV).is_file() {
        plot_grid(dir)?
    } else if dir.join(GENERATIONS_CSV).is_file() {
        plot_run(dir)?
    } else {
        return Err(Failure::Config(format!("{} is neither a run nor a grid directory", dir.display())));
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn verify_all(common: Common, full: bool) -> Result<(), Failure> {
    if common.config.is_some() || common.seed.is_some() {
        return Err(Failure::Config("verify uses fixed settings; --config and --seed are not accepted".into()));
    }
    let scratch = common.out.unwrap_or_else(|| std::env::temp_dir().join(format!("morphevo-verify-{}", std::process::id())));
    ensure_writable(&scratch)?;
    setup_workers(common.workers)?;
    let checks = verify::run_all(&scratch, full);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { common, checkpoint_every } => run(common, checkpoint_every),
        Command::Grid { common } => grid(common),
        Command::Plot { dir } => plot(&dir),
        Command::Verify { common, full } => verify_all(common, full),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
