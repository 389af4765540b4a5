//! Command-line runner for rotphase experiments.
//!
//! Exit status: 0 success, 1 configuration or usage error, 2 simulation
//! error, 3 fit failure or non-convergence, 4 comparison over tolerance,
//! 5 missing output, 6 other I/O failure.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use config::{ContrastMode, ExperimentConfig};
use error::CliError;
use experiments::{fit_files, run_experiment, RunOutcome};
use manifest::{blob_hash, Manifest, MANIFEST_NAME};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "rotphase",
    version,
    about = "Rotating spin-qubit experiment runner"
)]
struct Cli {
    /// Seed for all noise; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ContrastArg {
    Auto,
    Fixed,
    Free,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Simulate { config: PathBuf },
    /// Fit fringe datasets (CSV: b_x_tesla,population,sigma).
    Fit {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Fit one fringe frequency shared by all datasets.
        #[arg(long)]
        shared_f0: bool,
        #[arg(long, value_enum, default_value = "auto")]
        contrast: ContrastArg,
    },
    /// Compare the outputs of two runs (manifest files or run directories).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Largest accepted absolute difference per column.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

/// Parse `args` (including the program name), execute, and return the exit
/// status. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "config error: --threads must be > 0");
            return 1;
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { config } => simulate(config, cli.seed, cli.out_dir.as_deref(), out),
        Command::Fit {
            datasets,
            shared_f0,
            contrast,
        } => fit(datasets, *shared_f0, *contrast, cli.out_dir.as_deref(), out),
        Command::Compare { a, b, tolerance } => {
            let report = compare::compare_runs(a, b)?;
            out.write_all(report.render(*tolerance).as_bytes())?;
            let worst = report.worst();
            if worst > *tolerance {
                return Err(CliError::Mismatch(format!(
                    "max difference {worst:.3e} > tolerance {tolerance:.3e}"
                )));
            }
            Ok(())
        }
    }
}

fn write_run(
    dir: &Path,
    mut manifest: Manifest,
    outcome: RunOutcome,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for o in &outcome.outputs {
        std::fs::write(dir.join(&o.name), &o.content)?;
        manifest.outputs.push(o.name.clone());
        writeln!(out, "wrote {}", dir.join(&o.name).display())?;
    }
    std::fs::write(dir.join(MANIFEST_NAME), manifest.render())?;
    writeln!(out, "wrote {}", dir.join(MANIFEST_NAME).display())?;
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn simulate(
    path: &Path,
    seed: Option<u64>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("{}: not UTF-8", path.display())))?;
    let cfg = ExperimentConfig::parse(&text)?;
    cfg.validate()?;
    let seed = seed.unwrap_or(cfg.experiment.seed);
    let base = path.parent().unwrap_or(Path::new("."));
    let outcome = run_experiment(&cfg, seed, base)?;

    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| Path::new("runs").join(&stem));
    let mut m = Manifest::new();
    m.set("tool", "rotphase");
    m.set("version", VERSION);
    m.set("kind", cfg.experiment.kind.as_str());
    m.set(
        "config",
        path.file_name()
            .map(|s| s.to_string_lossy())
            .unwrap_or_default(),
    );
    m.set("config_sha256", blob_hash(&bytes));
    m.set("seed", seed);
    write_run(&dir, m, outcome, out)
}

fn fit(
    datasets: &[PathBuf],
    shared: bool,
    contrast: ContrastArg,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let contrast = match contrast {
        ContrastArg::Auto => ContrastMode::Auto,
        ContrastArg::Fixed => ContrastMode::Fixed,
        ContrastArg::Free => ContrastMode::Free,
    };
    let mut m = Manifest::new();
    m.set("tool", "rotphase");
    m.set("version", VERSION);
    m.set("kind", "fit");
    m.set("shared_f0", shared);
    for (i, p) in datasets.iter().enumerate() {
        let bytes = std::fs::read(p)
            .map_err(|e| CliError::Config(format!("dataset {}: {e}", p.display())))?;
        m.set(
            &format!("input.{i}"),
            p.file_name()
                .map(|s| s.to_string_lossy())
                .unwrap_or_default(),
        );
        m.set(&format!("input_sha256.{i}"), blob_hash(&bytes));
    }
    let outcome = fit_files(datasets, shared, contrast)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs/fit"));
    write_run(&dir, m, outcome, out)
}
