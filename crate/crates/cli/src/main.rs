//! Binary entry point: flag parsing, thread-pool setup, dispatch, and
//! the run manifest.
//!
//! Every subcommand takes the same four flags. The output directory is
//! resolved as `--out`, then the `MMFG_OUT` environment variable, then
//! the config's `output_dir`, then `./out`. On success (and on solver
//! nonconvergence, whose artifacts are still written) a `manifest.json`
//! is added beside the artifacts echoing the parsed config — the echo
//! re-parses to an equal configuration — the command name, the crate
//! version, and the wall time.

use clap::{Args, Parser, Subcommand};
use mmfg_cli::commands::{execute, Command};
use mmfg_cli::config::RunConfig;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Mean field game solver suite: major player plus minor crowd.
#[derive(Debug, Parser)]
#[command(name = "mmfg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: CommandSel,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides MMFG_OUT and the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap; 0 keeps the library default. Never affects
    /// the numbers, only how fast they arrive.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Print progress notes to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum CommandSel {
    /// Solve both standalone limiting value problems under fixed policies.
    SolveHjb(CommonArgs),
    /// Solve the coupled major/minor master system in one backward sweep.
    Master(CommonArgs),
    /// Iterate the damped best-response map to a Nash equilibrium.
    Equilibrium(CommonArgs),
    /// Simulate the limiting (major state, measure) process.
    Simulate(CommonArgs),
    /// Compare finite-population solutions against a reference resolution.
    ChaosStudy(CommonArgs),
    /// Sample-check the model's rates and costs, writing a report.
    Validate(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        CommandSel::SolveHjb(a) => (Command::SolveHjb, a),
        CommandSel::Master(a) => (Command::Master, a),
        CommandSel::Equilibrium(a) => (Command::Equilibrium, a),
        CommandSel::Simulate(a) => (Command::Simulate, a),
        CommandSel::ChaosStudy(a) => (Command::ChaosStudy, a),
        CommandSel::Validate(a) => (Command::Validate, a),
    };
    std::process::exit(run(command, &args));
}

fn run(command: Command, args: &CommonArgs) -> i32 {
    if args.threads > 0 {
        // A second global-pool initialization in the same process is
        // harmless: the cap is best-effort and never changes results.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global();
    }
    let config = match RunConfig::load(&args.config) {
        Ok(config) => config,
        Err(msg) => return fail(2, &msg),
    };
    let out_dir = resolve_out_dir(args, &config);
    if args.verbose {
        eprintln!(
            "mmfg: {} on model {} -> {}",
            command.name(),
            config.model.name,
            out_dir.display()
        );
    }
    let start = Instant::now();
    match execute(command, &config, &out_dir) {
        Ok(output) => {
            let wall_time_s = start.elapsed().as_secs_f64();
            if let Err(msg) =
                write_manifest(command, &config, &out_dir, wall_time_s, &output.artifacts)
            {
                return fail(1, &msg);
            }
            if args.verbose {
                eprintln!(
                    "mmfg: wrote {} artifacts in {wall_time_s:.3} s",
                    output.artifacts.len() + 1
                );
            }
            output.outcome.exit_code()
        }
        Err(err) => fail(err.exit_code(), err.message()),
    }
}

fn fail(code: i32, msg: &str) -> i32 {
    eprintln!("mmfg: {msg}");
    code
}

/// Output directory priority: flag, environment, config, `./out`.
fn resolve_out_dir(args: &CommonArgs, config: &RunConfig) -> PathBuf {
    if let Some(dir) = &args.out {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("MMFG_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Record what ran: command, config echo, version, wall time, files.
fn write_manifest(
    command: Command,
    config: &RunConfig,
    out: &Path,
    wall_time_s: f64,
    artifacts: &[PathBuf],
) -> Result<(), String> {
    let files: Vec<String> = artifacts.iter().map(|p| p.display().to_string()).collect();
    let body = serde_json::json!({
        "command": command.name(),
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall_time_s,
        "artifacts": files,
    });
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&body)
        .map_err(|e| format!("cannot serialize manifest: {e}"))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}
