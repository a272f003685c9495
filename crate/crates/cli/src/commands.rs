//! Subcommand implementations: build the configured model, run the
//! corresponding solver or study, and persist its artifacts.
//!
//! Failures carry the exit code they should produce: configuration
//! problems (bad fields, unknown models or parameters, infeasible
//! sizes) exit with 2, solver nonconvergence with 3 — with artifacts
//! still written so the partial run can be inspected — model
//! validation failures with 4, and anything else with 1.

use crate::config::{RunConfig, StudyKind};
use mmfg_core::chaos::{cost_convergence_study, value_convergence_study, StudyResult};
use mmfg_core::equilibrium::solve_equilibrium;
use mmfg_core::hjb::{solve_hjb, solve_master};
use mmfg_core::meanfield::{simulate_pdmp, McCost, PdmpInit, PdmpMode, PdmpPlan};
use mmfg_core::model::{validate_rates, ModelSpec, SamplePlan};
use mmfg_core::nplayer::{default_time_steps, PolicyStack};
use mmfg_core::output::{
    cost_summary_json, pdmp_paths_csv, policy_csv, value_table_csv, write_equilibrium,
    write_file, write_master_solution, write_study,
};
use mmfg_core::{ConstantPolicy, CoreError, Role};
use std::path::{Path, PathBuf};

/// A dispatchable subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveHjb,
    Master,
    Equilibrium,
    Simulate,
    ChaosStudy,
    Validate,
}

impl Command {
    /// The subcommand's CLI spelling, echoed into the run manifest.
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveHjb => "solve-hjb",
            Command::Master => "master",
            Command::Equilibrium => "equilibrium",
            Command::Simulate => "simulate",
            Command::ChaosStudy => "chaos-study",
            Command::Validate => "validate",
        }
    }
}

/// A failed run, tagged with the exit code it should produce.
#[derive(Debug)]
pub enum CliError {
    /// Configuration problem (exit 2).
    Config(String),
    /// Model validation failure (exit 4).
    Validation(String),
    /// Any other failure (exit 1).
    Other(String),
}

impl CliError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    /// Human-readable description for stderr.
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Validation(m) | CliError::Other(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> CliError {
        let msg = err.to_string();
        match err {
            CoreError::UnknownModel { .. }
            | CoreError::BadParameter { .. }
            | CoreError::GridTooLarge { .. }
            | CoreError::InfeasibleN { .. }
            | CoreError::Alpha0FreeRequired { .. } => CliError::Config(msg),
            CoreError::RateBoundViolation { .. } | CoreError::ConsistencyFailure { .. } => {
                CliError::Validation(msg)
            }
            _ => CliError::Other(msg),
        }
    }
}

/// How a completed dispatch ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Everything converged / validated (exit 0).
    Success,
    /// The iteration hit its cap before the tolerance (exit 3).
    NonConvergence,
    /// Rate validation reported violations (exit 4).
    ValidationFailed,
}

impl Outcome {
    /// Process exit code for this outcome.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::NonConvergence => 3,
            Outcome::ValidationFailed => 4,
        }
    }
}

/// Artifacts written by a dispatch plus its outcome.
#[derive(Debug)]
pub struct CommandOutput {
    pub outcome: Outcome,
    /// Files written, in writing order, relative to the output directory.
    pub artifacts: Vec<PathBuf>,
}

/// Uniform step count: the configured override or the resolution-scaled
/// stability default.
fn steps_for(config: &RunConfig, model: &ModelSpec) -> usize {
    config
        .grid
        .time_steps
        .unwrap_or_else(|| default_time_steps(model, config.grid.k))
}

/// Run one subcommand against a validated config, writing into `out`.
pub fn execute(
    command: Command,
    config: &RunConfig,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let model = config.build_model()?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", out.display())))?;
    match command {
        Command::SolveHjb => run_solve_hjb(config, &model, out),
        Command::Master => run_master(config, &model, out),
        Command::Equilibrium => run_equilibrium(config, &model, out),
        Command::Simulate => run_simulate(config, &model, out),
        Command::ChaosStudy => run_chaos_study(config, &model, out),
        Command::Validate => run_validate(config, &model, out),
    }
}

/// Strip the directory so manifests list artifacts by file name.
fn relative(paths: Vec<PathBuf>) -> Vec<PathBuf> {
    paths
        .into_iter()
        .map(|p| p.file_name().map(PathBuf::from).unwrap_or(p))
        .collect()
}

/// Both standalone value solves under first-action constant policies
/// for the non-optimizing classes: the crowd plays its first action and,
/// for the minor solve, so does the major player.
fn run_solve_hjb(
    config: &RunConfig,
    model: &ModelSpec,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let steps = steps_for(config, model);
    let major = ConstantPolicy(0);
    let field = ConstantPolicy(0);
    let policies = PolicyStack::new(&major, &field);
    let (major_solve, minor_solve) = rayon::join(
        || solve_hjb(model, Role::Major, &policies, config.grid.k, steps),
        || solve_hjb(model, Role::Minor, &policies, config.grid.k, steps),
    );
    let major_solve = major_solve?;
    let minor_solve = minor_solve?;
    let files = [
        ("major_values.csv", value_table_csv(&major_solve.table)),
        ("minor_values.csv", value_table_csv(&minor_solve.table)),
        ("major_policy.csv", policy_csv(&major_solve.policy)),
        ("minor_policy.csv", policy_csv(&minor_solve.policy)),
        (
            "solution.json",
            format!(
                "{{\n  \"model\": \"{}\",\n  \"K\": {},\n  \"time_steps\": {},\n  \
                 \"tie_count\": {}\n}}\n",
                model.name(),
                config.grid.k,
                steps,
                major_solve.ties + minor_solve.ties,
            ),
        ),
    ];
    let mut artifacts = Vec::new();
    for (name, contents) in files {
        write_file(&out.join(name), &contents)?;
        artifacts.push(PathBuf::from(name));
    }
    Ok(CommandOutput { outcome: Outcome::Success, artifacts })
}

fn run_master(
    config: &RunConfig,
    model: &ModelSpec,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let steps = steps_for(config, model);
    let solution = solve_master(model, config.grid.k, steps)?;
    let written = write_master_solution(out, model.name(), &solution)?;
    Ok(CommandOutput { outcome: Outcome::Success, artifacts: relative(written) })
}

fn run_equilibrium(
    config: &RunConfig,
    model: &ModelSpec,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let steps = steps_for(config, model);
    let result = solve_equilibrium(
        model,
        config.grid.k,
        steps,
        config.solver.damping,
        config.solver.tol,
        config.solver.max_iter,
        None,
    )?;
    let written = write_equilibrium(out, model.name(), &result)?;
    let outcome = if result.converged { Outcome::Success } else { Outcome::NonConvergence };
    Ok(CommandOutput { outcome, artifacts: relative(written) })
}

/// Simulate the limiting `(major, measure)` process under first-action
/// constant policies from the uniform initial measure.
fn run_simulate(
    config: &RunConfig,
    model: &ModelSpec,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let major = ConstantPolicy(0);
    let field = ConstantPolicy(0);
    let policies = PolicyStack::new(&major, &field);
    let m = model.m();
    let init = PdmpInit {
        major: 0,
        tagged: None,
        x: vec![1.0 / m as f64; m - 1],
    };
    let plan = PdmpPlan::new(config.simulation.n_paths, config.simulation.seed)
        .with_recording(config.simulation.record_paths.min(config.simulation.n_paths));
    let output = simulate_pdmp(model, PdmpMode::Pair, &policies, &init, &plan)?;
    let cost = McCost {
        mean: output.major.mean,
        se: output.major.se,
        n_paths: output.n_paths,
        seed: output.seed,
    };
    write_file(&out.join("paths.csv"), &pdmp_paths_csv(&output, m))?;
    write_file(&out.join("costs.json"), &cost_summary_json(&cost))?;
    Ok(CommandOutput {
        outcome: Outcome::Success,
        artifacts: vec![PathBuf::from("paths.csv"), PathBuf::from("costs.json")],
    })
}

fn run_chaos_study(
    config: &RunConfig,
    model: &ModelSpec,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let steps = config.grid.time_steps.unwrap_or(100);
    let major = ConstantPolicy(0);
    let field = ConstantPolicy(0);
    let policies = PolicyStack::new(&major, &field);
    let study: StudyResult = match config.study.kind {
        StudyKind::Cost => cost_convergence_study(
            model,
            &policies,
            &config.study.n_list,
            config.study.k_ref,
            steps,
        )?,
        StudyKind::Value => value_convergence_study(
            model,
            &policies,
            &config.study.n_list,
            config.study.k_ref,
            steps,
        )?,
    };
    let written = write_study(out, &study)?;
    Ok(CommandOutput { outcome: Outcome::Success, artifacts: relative(written) })
}

/// Sample the model's rates and costs; violations make this command
/// fail with the validation exit code, but the report is always written.
fn run_validate(
    config: &RunConfig,
    model: &ModelSpec,
    out: &Path,
) -> std::result::Result<CommandOutput, CliError> {
    let plan = SamplePlan { seed: config.simulation.seed, ..SamplePlan::default() };
    let report = validate_rates(model, &plan);
    let violations: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    let body = serde_json::json!({
        "model": model.name(),
        "samples": report.samples,
        "violations": violations,
    });
    let text = format!("{:#}\n", body);
    write_file(&out.join("validation.json"), &text)?;
    let outcome = if report.is_ok() { Outcome::Success } else { Outcome::ValidationFailed };
    Ok(CommandOutput { outcome, artifacts: vec![PathBuf::from("validation.json")] })
}
