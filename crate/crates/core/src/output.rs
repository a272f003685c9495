//! Deterministic serialization of solver artifacts.
//!
//! Every float prints as `{:.16e}` (17 significant digits, enough to
//! round-trip an `f64` exactly), rows follow a fixed order (time knot
//! ascending, then major state, then minor state, then grid rank), and
//! JSON objects list their keys in a fixed order — so equal inputs
//! always serialize to byte-identical files. JSON carries no NaN or
//! infinity; non-finite floats (a degenerate study slope, say) are
//! written as `null`.
//!
//! Directory writers persist composite results: a master or
//! equilibrium solution becomes four CSV tables plus a small JSON
//! manifest, a convergence study becomes `study.csv` plus
//! `study.json`, and the writers return the created paths so callers
//! can list them in their own run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::equilibrium::EquilibriumResult;
use crate::error::{CoreError, Result};
use crate::chaos::StudyResult;
use crate::hjb::MasterSolution;
use crate::meanfield::{McCost, PdmpOutput};
use crate::model::SIMPLEX_TOL;
use crate::nplayer::TIE_TOL;
use crate::table::{FeedbackPolicy, Role, ValueTable};

/// One float, 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One float as a JSON value (`null` when not finite).
fn json_num(v: f64) -> String {
    if v.is_finite() {
        num(v)
    } else {
        "null".to_string()
    }
}

fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn x_columns(dim: usize) -> String {
    (1..=dim).map(|d| format!(",x_{d}")).collect()
}

/// Render a value table as CSV: columns `t,i0[,i],x_*,value`.
pub fn value_table_csv(table: &ValueTable) -> String {
    let grid = table.grid();
    let dim = grid.m() - 1;
    let minor = table.role() == Role::Minor;
    let mut out = String::new();
    out.push_str("t,i0");
    if minor {
        out.push_str(",i");
    }
    out.push_str(&x_columns(dim));
    out.push_str(",value\n");
    for (knot, &t) in table.time_grid().iter().enumerate() {
        let ts = num(t);
        for i0 in 0..table.m0() {
            for i in 0..if minor { table.m() } else { 1 } {
                for rank in 0..grid.len() {
                    out.push_str(&ts);
                    let _ = write!(out, ",{i0}");
                    if minor {
                        let _ = write!(out, ",{i}");
                    }
                    for &xd in grid.point(rank) {
                        out.push(',');
                        out.push_str(&num(xd));
                    }
                    let v = if minor {
                        table.minor_at(knot, i, i0, rank)
                    } else {
                        table.major_at(knot, i0, rank)
                    };
                    out.push(',');
                    out.push_str(&num(v));
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// Render a feedback policy as CSV: columns
/// `t,i0[,i],x_*,action_index,a_*` with the action's coordinates.
pub fn policy_csv(policy: &FeedbackPolicy) -> String {
    let grid = policy.grid();
    let dim = grid.m() - 1;
    let minor = policy.role() == Role::Minor;
    let adim = policy.actions().dim();
    let mut out = String::new();
    out.push_str("t,i0");
    if minor {
        out.push_str(",i");
    }
    out.push_str(&x_columns(dim));
    out.push_str(",action_index");
    for d in 1..=adim {
        let _ = write!(out, ",a_{d}");
    }
    out.push('\n');
    for (knot, &t) in policy.time_grid().iter().enumerate() {
        let ts = num(t);
        for i0 in 0..policy.m0() {
            for i in 0..if minor { policy.m() } else { 1 } {
                for rank in 0..grid.len() {
                    out.push_str(&ts);
                    let _ = write!(out, ",{i0}");
                    if minor {
                        let _ = write!(out, ",{i}");
                    }
                    for &xd in grid.point(rank) {
                        out.push(',');
                        out.push_str(&num(xd));
                    }
                    let idx = policy.at(knot, i, i0, rank);
                    let _ = write!(out, ",{idx}");
                    for &a in policy.actions().point(idx) {
                        out.push(',');
                        out.push_str(&num(a));
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// Render the damped-iteration history as CSV: one row per iteration
/// with the policy-change fraction and both exploitability figures.
pub fn residuals_csv(result: &EquilibriumResult) -> String {
    let mut out = String::from("iteration,changed_fraction,eps_major,eps_minor\n");
    for (k, (res, eps)) in result
        .residual_history
        .iter()
        .zip(result.exploitability_history.iter())
        .enumerate()
    {
        let _ = writeln!(out, "{},{},{},{}", k + 1, num(*res), num(eps.0), num(eps.1));
    }
    out
}

/// Render per-population study errors as CSV.
pub fn study_csv(study: &StudyResult) -> String {
    let mut out = String::from("N,error_major,error_minor,runtime_s\n");
    for (k, &n) in study.n_list.iter().enumerate() {
        let _ = writeln!(
            out,
            "{n},{},{},{}",
            num(study.major_errors[k]),
            num(study.minor_errors[k]),
            num(study.runtimes_s[k])
        );
    }
    out
}

/// Render the study's fit and configuration as JSON.
pub fn study_json(study: &StudyResult) -> String {
    let n_list: Vec<String> = study.config.n_list.iter().map(u32::to_string).collect();
    format!(
        "{{\n  \"slope\": {},\n  \"intercept\": {},\n  \"degenerate\": {},\n  \"config\": {{\n    \
         \"model\": {},\n    \"n_list\": [{}],\n    \"k_ref\": {},\n    \"time_steps\": {}\n  }}\n}}\n",
        json_num(study.slope),
        json_num(study.intercept),
        study.degenerate,
        json_str(&study.config.model),
        n_list.join(", "),
        study.config.k_ref,
        study.config.time_steps,
    )
}

/// Render a Monte Carlo cost estimate as JSON.
pub fn cost_summary_json(cost: &McCost) -> String {
    format!(
        "{{\n  \"mean\": {},\n  \"se\": {},\n  \"n_paths\": {},\n  \"seed\": {}\n}}\n",
        json_num(cost.mean),
        json_num(cost.se),
        cost.n_paths,
        cost.seed,
    )
}

/// Render recorded limit paths as CSV with a leading `path` column:
/// `path,t,i0[,i],x_*`. The tagged-state column appears in triple mode.
pub fn pdmp_paths_csv(output: &PdmpOutput, m: usize) -> String {
    let triple = output.tagged.is_some();
    let mut out = String::from("path,t,i0");
    if triple {
        out.push_str(",i");
    }
    out.push_str(&x_columns(m - 1));
    out.push('\n');
    for path in &output.paths {
        for s in &path.samples {
            let _ = write!(out, "{},{},{}", path.index, num(s.t), s.major);
            if triple {
                let _ = write!(out, ",{}", s.tagged.expect("triple-mode samples carry a tagged state"));
            }
            for &xd in &s.x {
                out.push(',');
                out.push_str(&num(xd));
            }
            out.push('\n');
        }
    }
    out
}

/// Write `contents` to `path`, surfacing failures with path context.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|source| CoreError::Io { path: path.display().to_string(), source })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|source| CoreError::Io { path: dir.display().to_string(), source })
}

fn emit(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    write_file(&path, contents)?;
    written.push(path);
    Ok(())
}

fn tolerances_json() -> String {
    format!("{{\"tie_tol\": {}, \"simplex_tol\": {}}}", num(TIE_TOL), num(SIMPLEX_TOL))
}

/// Persist a master solve: four CSV tables plus `solution.json` with
/// the model name, resolution, step count, tolerances, and tie count.
pub fn write_master_solution(
    dir: &Path,
    model_name: &str,
    solution: &MasterSolution,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    emit(dir, "major_values.csv", &value_table_csv(&solution.major_values), &mut written)?;
    emit(dir, "minor_values.csv", &value_table_csv(&solution.minor_values), &mut written)?;
    emit(dir, "major_policy.csv", &policy_csv(&solution.major_policy), &mut written)?;
    emit(dir, "minor_policy.csv", &policy_csv(&solution.minor_policy), &mut written)?;
    let manifest = format!(
        "{{\n  \"model\": {},\n  \"K\": {},\n  \"time_steps\": {},\n  \"tolerances\": {},\n  \
         \"tie_count\": {}\n}}\n",
        json_str(model_name),
        solution.major_values.grid().resolution(),
        solution.major_values.time_grid().len() - 1,
        tolerances_json(),
        solution.ties,
    );
    emit(dir, "solution.json", &manifest, &mut written)?;
    Ok(written)
}

/// Persist an equilibrium solve: the same four-table layout plus
/// `residuals.csv` and a manifest carrying the iteration outcome.
pub fn write_equilibrium(
    dir: &Path,
    model_name: &str,
    result: &EquilibriumResult,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    emit(dir, "major_values.csv", &value_table_csv(&result.major_values), &mut written)?;
    emit(dir, "minor_values.csv", &value_table_csv(&result.minor_values), &mut written)?;
    emit(dir, "major_policy.csv", &policy_csv(&result.major_policy), &mut written)?;
    emit(dir, "minor_policy.csv", &policy_csv(&result.minor_policy), &mut written)?;
    emit(dir, "residuals.csv", &residuals_csv(result), &mut written)?;
    let manifest = format!(
        "{{\n  \"model\": {},\n  \"K\": {},\n  \"time_steps\": {},\n  \"tolerances\": {},\n  \
         \"iterations\": {},\n  \"converged\": {},\n  \"exploitability\": {{\"major\": {}, \"minor\": {}}}\n}}\n",
        json_str(model_name),
        result.major_values.grid().resolution(),
        result.major_values.time_grid().len() - 1,
        tolerances_json(),
        result.iterations,
        result.converged,
        json_num(result.exploitability.0),
        json_num(result.exploitability.1),
    );
    emit(dir, "solution.json", &manifest, &mut written)?;
    Ok(written)
}

/// Persist a convergence study as `study.csv` plus `study.json`.
pub fn write_study(dir: &Path, study: &StudyResult) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    emit(dir, "study.csv", &study_csv(study), &mut written)?;
    emit(dir, "study.json", &study_json(study), &mut written)?;
    Ok(written)
}
