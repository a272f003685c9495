//! Convergence studies: how fast finite-population quantities approach
//! their large-population counterparts, and how well limiting
//! equilibrium policies hold up inside finite games.
//!
//! Both studies compare exact occupancy-grid solves instead of Monte
//! Carlo estimates, so the measured gaps contain no sampling noise: the
//! reference is the same backward sweep run at a large resolution
//! `K_ref` and interpolated to the coarse grid points. Comparisons are
//! taken at the initial time over every state combination and every
//! point of `P^N`, and the decay rate comes from a least-squares fit of
//! `log error` against `log N`. Populations whose error sits at the
//! numerical floor are dropped from the fit (their logarithm is
//! meaningless); if fewer than two usable points remain the fit is
//! reported as NaN and flagged.
//!
//! The deviation check is sampling-based by necessity (it plays single
//! deviating players inside the `N + 1`-player game), but pairs runs by
//! common random numbers: the baseline and every deviation reuse the
//! same per-path substreams, so an identical deviation cancels path by
//! path and reports a gain of exactly zero.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::model::{ModelSpec, MAX_GRID_POINTS};
use crate::nplayer::{
    default_time_steps, simulate_paths, solve_cost_ode, solve_value_ode, stat, NPlayerInit,
    PolicyStack, SimulationPlan,
};
use crate::table::{MajorPolicy, MinorPolicy, Role, ValueTable};

/// Errors at or below this floor are excluded from the log-log fit.
pub const ERROR_FLOOR: f64 = 1e-10;

/// The inputs a study ran with, echoed into its result.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub model: String,
    pub n_list: Vec<u32>,
    pub k_ref: u32,
    pub time_steps: usize,
}

/// Per-population sup-norm errors against the reference solve, with the
/// fitted log-log decay rate of the larger of the two class errors.
#[derive(Debug, Clone)]
pub struct StudyResult {
    /// Population sizes in ascending order.
    pub n_list: Vec<u32>,
    /// Sup-norm major-player error per population.
    pub major_errors: Vec<f64>,
    /// Sup-norm representative-minor error per population.
    pub minor_errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log N`.
    pub slope: f64,
    /// Least-squares intercept of the same fit.
    pub intercept: f64,
    /// True when the fit had to drop floor-level errors (NaN slope if
    /// fewer than two points survived).
    pub degenerate: bool,
    /// Wall-clock seconds spent on each population's solves.
    pub runtimes_s: Vec<f64>,
    pub config: StudyConfig,
}

/// One unilateral deviation to test: a replacement policy for the major
/// player or for the tagged representative minor player.
pub enum Deviation<'a> {
    Major(&'a dyn MajorPolicy),
    Minor(&'a dyn MinorPolicy),
}

/// Estimated cost change from one deviation, paired path by path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashGain {
    /// Mean of `cost(deviation) - cost(candidate)`; nonnegative means
    /// the deviation does not pay.
    pub gain: f64,
    pub se: f64,
    pub n_paths: usize,
}

/// Expected-cost convergence of the finite game under fixed policies:
/// for each `N` the sup over initial-time states and `P^N` of the gap
/// to the resolution-`K_ref` reference solve.
pub fn cost_convergence_study(
    model: &ModelSpec,
    policies: &PolicyStack,
    n_list: &[u32],
    k_ref: u32,
    time_steps: usize,
) -> Result<StudyResult> {
    run_study(model, policies, n_list, k_ref, time_steps, false)
}

/// Best-response-value convergence: as [`cost_convergence_study`] but
/// with the acting player's control re-minimized at every stage, so the
/// compared tables are values rather than costs of a fixed policy.
pub fn value_convergence_study(
    model: &ModelSpec,
    policies: &PolicyStack,
    n_list: &[u32],
    k_ref: u32,
    time_steps: usize,
) -> Result<StudyResult> {
    run_study(model, policies, n_list, k_ref, time_steps, true)
}

/// Play each deviation against the candidate equilibrium `(major,
/// minor)` in the `N + 1`-player game and estimate its cost gain with
/// common random numbers; gains well above `-C/sqrt(N)` support the
/// candidate being an approximate equilibrium.
pub fn approx_nash_check(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    minor: &dyn MinorPolicy,
    n: u32,
    deviations: &[Deviation],
    init: &NPlayerInit,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<NashGain>> {
    let base_stack = PolicyStack::new(major, minor);
    let plan = SimulationPlan::new(n_paths, seed);
    let base = simulate_paths(model, n, &base_stack, init, &plan)?;
    let mut gains = Vec::with_capacity(deviations.len());
    for deviation in deviations {
        let run = match deviation {
            Deviation::Major(p) => {
                simulate_paths(model, n, &PolicyStack::new(*p, minor), init, &plan)?
            }
            Deviation::Minor(p) => {
                simulate_paths(model, n, &base_stack.with_tagged(*p), init, &plan)?
            }
        };
        let diffs: Vec<f64> = run
            .path_costs
            .iter()
            .zip(base.path_costs.iter())
            .map(|(d, b)| match deviation {
                Deviation::Major(_) => d.major - b.major,
                Deviation::Minor(_) => d.tagged - b.tagged,
            })
            .collect();
        let s = stat(diffs.iter().copied(), diffs.len());
        gains.push(NashGain { gain: s.mean, se: s.se, n_paths: diffs.len() });
    }
    Ok(gains)
}

fn run_study(
    model: &ModelSpec,
    policies: &PolicyStack,
    n_list: &[u32],
    k_ref: u32,
    time_steps: usize,
    optimize: bool,
) -> Result<StudyResult> {
    let sorted = validate_study(model, n_list, k_ref)?;
    // Every solve gets at least its population-matched default step
    // count: a single `time_steps` knob must not destabilize the much
    // stiffer reference system.
    let solve = |role: Role, n: u32| -> Result<ValueTable> {
        let steps = time_steps.max(default_time_steps(model, n));
        if optimize {
            Ok(solve_value_ode(model, role, n, steps, policies)?.table)
        } else {
            solve_cost_ode(model, role, n, steps, policies)
        }
    };
    let (ref_major, ref_minor) =
        rayon::join(|| solve(Role::Major, k_ref), || solve(Role::Minor, k_ref));
    let (ref_major, ref_minor) = (ref_major?, ref_minor?);

    let per_n: Result<Vec<(f64, f64, f64)>> = sorted
        .par_iter()
        .map(|&n| {
            let start = Instant::now();
            let major = solve(Role::Major, n)?;
            let minor = solve(Role::Minor, n)?;
            let e_major = sup_major_gap(&major, &ref_major)?;
            let e_minor = sup_minor_gap(&minor, &ref_minor)?;
            Ok((e_major, e_minor, start.elapsed().as_secs_f64()))
        })
        .collect();
    let per_n = per_n?;

    let major_errors: Vec<f64> = per_n.iter().map(|r| r.0).collect();
    let minor_errors: Vec<f64> = per_n.iter().map(|r| r.1).collect();
    let runtimes_s: Vec<f64> = per_n.iter().map(|r| r.2).collect();
    let (slope, intercept, degenerate) = fit_decay(&sorted, &major_errors, &minor_errors);
    let config = StudyConfig {
        model: model.name().to_string(),
        n_list: sorted.clone(),
        k_ref,
        time_steps,
    };
    Ok(StudyResult {
        n_list: sorted,
        major_errors,
        minor_errors,
        slope,
        intercept,
        degenerate,
        runtimes_s,
        config,
    })
}

/// Sort and vet the population list; errors are pure functions of the
/// set of sizes, so input order is irrelevant.
fn validate_study(model: &ModelSpec, n_list: &[u32], k_ref: u32) -> Result<Vec<u32>> {
    if n_list.is_empty() {
        return Err(CoreError::BadParameter {
            key: "N_list".into(),
            reason: "need at least one population size".into(),
        });
    }
    let mut sorted = n_list.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CoreError::BadParameter {
            key: "N_list".into(),
            reason: "population sizes must be distinct".into(),
        });
    }
    for &n in &sorted {
        check_feasible(model, n)?;
    }
    let top = *sorted.last().unwrap();
    if k_ref < top {
        return Err(CoreError::BadParameter {
            key: "K_ref".into(),
            reason: format!("reference resolution {k_ref} is below the largest population {top}"),
        });
    }
    check_feasible(model, k_ref)?;
    Ok(sorted)
}

fn check_feasible(model: &ModelSpec, n: u32) -> Result<()> {
    if n == 0 {
        return Err(CoreError::InfeasibleN {
            n: 0,
            reason: "population must be positive".into(),
        });
    }
    match simplex_points(model.m(), n) {
        Some(points) if points <= MAX_GRID_POINTS => Ok(()),
        Some(points) => Err(CoreError::InfeasibleN {
            n: n as usize,
            reason: format!("occupancy grid needs {points} points (cap {MAX_GRID_POINTS})"),
        }),
        None => Err(CoreError::InfeasibleN {
            n: n as usize,
            reason: "occupancy grid size overflows".into(),
        }),
    }
}

/// `C(n + m - 1, m - 1)`: the number of points of `P^n` with `m`
/// states. The running product stays integral at every division.
fn simplex_points(m: usize, n: u32) -> Option<u64> {
    let mut acc: u128 = 1;
    for d in 1..m as u128 {
        acc = acc.checked_mul(u128::from(n) + d)? / d;
    }
    u64::try_from(acc).ok()
}

fn sup_major_gap(fine: &ValueTable, reference: &ValueTable) -> Result<f64> {
    let grid = fine.grid();
    let mut worst = 0.0f64;
    for i0 in 0..fine.m0() {
        for rank in 0..grid.len() {
            let r = reference.value_at(0, 0, i0, grid.point(rank))?;
            worst = worst.max((fine.major_at(0, i0, rank) - r).abs());
        }
    }
    Ok(worst)
}

fn sup_minor_gap(fine: &ValueTable, reference: &ValueTable) -> Result<f64> {
    let grid = fine.grid();
    let mut worst = 0.0f64;
    for i in 0..fine.m() {
        for i0 in 0..fine.m0() {
            for rank in 0..grid.len() {
                // A tagged player in a state with zero occupancy is
                // unreachable (the player itself is counted), and those
                // entries obey a different boundary system; skip them.
                if grid.count_of(rank, i) == 0 {
                    continue;
                }
                let r = reference.value_at(0, i, i0, grid.point(rank))?;
                worst = worst.max((fine.minor_at(0, i, i0, rank) - r).abs());
            }
        }
    }
    Ok(worst)
}

/// Least squares of `log(max(major, minor))` against `log N`, dropping
/// floor-level errors; returns `(slope, intercept, degenerate)`.
fn fit_decay(n_list: &[u32], major: &[f64], minor: &[f64]) -> (f64, f64, bool) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for ((&n, &a), &b) in n_list.iter().zip(major).zip(minor) {
        let e = a.max(b);
        if e > ERROR_FLOOR {
            xs.push(f64::from(n).ln());
            ys.push(e.ln());
        }
    }
    let degenerate = xs.len() < n_list.len();
    if xs.len() < 2 {
        return (f64::NAN, f64::NAN, true);
    }
    let count = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / count;
    let my = ys.iter().sum::<f64>() / count;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_equilibrium;
    use crate::model::{load_builtin, ActionSet, Dynamics, ModelSpec};
    use crate::rng::substream;
    use crate::table::ConstantPolicy;
    use rand::Rng;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn two_two() -> ModelSpec {
        load_builtin("two_two", &BTreeMap::new()).unwrap()
    }

    fn const_stack() -> PolicyStack<'static> {
        PolicyStack { major: &ConstantPolicy(0), field: &ConstantPolicy(1), tagged: None }
    }

    /// Constant running costs, zero terminal costs, lively jumps.
    struct FlatRunning;

    impl Dynamics for FlatRunning {
        fn q0(&self, _t: f64, i0: usize, j0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            match (i0, j0) {
                (0, 1) => 0.5,
                (0, 0) => -0.5,
                (1, 0) => 0.4,
                (1, 1) => -0.4,
                _ => 0.0,
            }
        }
        fn q(&self, _t: f64, i: usize, j: usize, _a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            match (i, j) {
                (0, 1) => 0.6,
                (0, 0) => -0.6,
                (1, 0) => 0.3,
                (1, 1) => -0.3,
                _ => 0.0,
            }
        }
        fn f0(&self, _t: f64, _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            0.6
        }
        fn f(&self, _t: f64, _i: usize, _a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            1.1
        }
        fn g0(&self, _i0: usize, _x: &[f64]) -> f64 {
            0.0
        }
        fn g(&self, _i: usize, _i0: usize, _x: &[f64]) -> f64 {
            0.0
        }
    }

    fn flat_running_model() -> ModelSpec {
        ModelSpec::new(
            "flat_running",
            2,
            2,
            1.0,
            ActionSet::scalar(&[0.0]).unwrap(),
            ActionSet::scalar(&[0.0]).unwrap(),
            1.0,
            0.0,
            true,
            BTreeMap::new(),
            Arc::new(FlatRunning),
        )
        .unwrap()
    }

    /// Zero running costs, constant terminal costs, action-driven rates.
    struct FlatTerminal;

    impl Dynamics for FlatTerminal {
        fn q0(&self, _t: f64, i0: usize, j0: usize, a0: &[f64], _x: &[f64]) -> f64 {
            let up = 0.3 + 0.4 * a0[0];
            match (i0, j0) {
                (0, 1) => up,
                (0, 0) => -up,
                (1, 0) => 0.4,
                (1, 1) => -0.4,
                _ => 0.0,
            }
        }
        fn q(&self, _t: f64, i: usize, j: usize, a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            let up = 0.2 + 0.5 * a[0];
            match (i, j) {
                (0, 1) => up,
                (0, 0) => -up,
                (1, 0) => 0.3,
                (1, 1) => -0.3,
                _ => 0.0,
            }
        }
        fn f0(&self, _t: f64, _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            0.0
        }
        fn f(&self, _t: f64, _i: usize, _a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
            0.0
        }
        fn g0(&self, _i0: usize, _x: &[f64]) -> f64 {
            0.2
        }
        fn g(&self, _i: usize, _i0: usize, _x: &[f64]) -> f64 {
            0.3
        }
    }

    fn flat_terminal_model() -> ModelSpec {
        ModelSpec::new(
            "flat_terminal",
            2,
            2,
            1.0,
            ActionSet::scalar(&[0.0, 1.0]).unwrap(),
            ActionSet::scalar(&[0.0, 1.0]).unwrap(),
            1.0,
            0.0,
            true,
            BTreeMap::new(),
            Arc::new(FlatTerminal),
        )
        .unwrap()
    }

    /// Singleton actions with measure-dependent costs and rates, so the
    /// studies see genuine population effects with nothing to optimize.
    struct Forced;

    impl Dynamics for Forced {
        fn q0(&self, _t: f64, i0: usize, j0: usize, _a0: &[f64], x: &[f64]) -> f64 {
            let up = 0.5 + 0.2 * x[0];
            match (i0, j0) {
                (0, 1) => up,
                (0, 0) => -up,
                (1, 0) => 0.4,
                (1, 1) => -0.4,
                _ => 0.0,
            }
        }
        fn q(&self, _t: f64, i: usize, j: usize, _a: &[f64], _i0: usize, _a0: &[f64], x: &[f64]) -> f64 {
            let up = 0.6 + 0.2 * x[0];
            match (i, j) {
                (0, 1) => up,
                (0, 0) => -up,
                (1, 0) => 0.3,
                (1, 1) => -0.3,
                _ => 0.0,
            }
        }
        fn f0(&self, _t: f64, i0: usize, _a0: &[f64], x: &[f64]) -> f64 {
            0.3 + 0.5 * x[0] * x[0] + 0.1 * i0 as f64
        }
        fn f(&self, _t: f64, i: usize, _a: &[f64], _i0: usize, _a0: &[f64], x: &[f64]) -> f64 {
            0.2 + 0.4 * x[0] * x[0] + 0.1 * i as f64
        }
        fn g0(&self, i0: usize, _x: &[f64]) -> f64 {
            0.1 * i0 as f64
        }
        fn g(&self, i: usize, _i0: usize, _x: &[f64]) -> f64 {
            0.1 * i as f64
        }
    }

    fn forced_model() -> ModelSpec {
        ModelSpec::new(
            "forced",
            2,
            2,
            1.0,
            ActionSet::scalar(&[0.0]).unwrap(),
            ActionSet::scalar(&[0.0]).unwrap(),
            1.0,
            0.0,
            true,
            BTreeMap::new(),
            Arc::new(Forced),
        )
        .unwrap()
    }

    #[test]
    fn constant_running_costs_yield_zero_errors_and_a_degenerate_fit() {
        let model = flat_running_model();
        let stack = PolicyStack::new(&ConstantPolicy(0), &ConstantPolicy(0));
        let study = cost_convergence_study(&model, &stack, &[2, 4, 8], 16, 100).unwrap();
        assert_eq!(study.n_list, vec![2, 4, 8]);
        for (a, b) in study.major_errors.iter().zip(study.minor_errors.iter()) {
            assert!(*a >= 0.0 && *a <= 1e-10, "major error {a} above the floor");
            assert!(*b >= 0.0 && *b <= 1e-10, "minor error {b} above the floor");
        }
        assert!(study.slope.is_nan() && study.intercept.is_nan());
        assert!(study.degenerate);
        assert_eq!(study.runtimes_s.len(), 3);
        assert_eq!(study.config.model, "flat_running");
        assert_eq!(study.config.k_ref, 16);
    }

    #[test]
    fn constant_terminal_values_are_exact_for_the_value_study() {
        let model = flat_terminal_model();
        let stack = PolicyStack::new(&ConstantPolicy(0), &ConstantPolicy(0));
        let study = value_convergence_study(&model, &stack, &[2, 4], 8, 100).unwrap();
        for (a, b) in study.major_errors.iter().zip(study.minor_errors.iter()) {
            assert!(*a <= 1e-10, "major error {a}");
            assert!(*b <= 1e-10, "minor error {b}");
        }
        assert!(study.degenerate && study.slope.is_nan());
    }

    #[test]
    fn singleton_actions_collapse_value_and_cost_studies() {
        let model = forced_model();
        let stack = PolicyStack::new(&ConstantPolicy(0), &ConstantPolicy(0));
        let cost = cost_convergence_study(&model, &stack, &[2, 4, 8], 32, 100).unwrap();
        let value = value_convergence_study(&model, &stack, &[2, 4, 8], 32, 100).unwrap();
        assert_eq!(cost.major_errors, value.major_errors);
        assert_eq!(cost.minor_errors, value.minor_errors);
        assert!(cost.major_errors.iter().any(|e| *e > 1e-6), "study should be nontrivial");
    }

    #[test]
    fn cost_errors_decay_at_the_predicted_rate_on_two_two() {
        let model = two_two();
        let study =
            cost_convergence_study(&model, &const_stack(), &[4, 8, 16, 32], 128, 100).unwrap();
        for k in 0..study.n_list.len() {
            assert!(study.major_errors[k].is_finite() && study.major_errors[k] >= 0.0);
            assert!(study.minor_errors[k].is_finite() && study.minor_errors[k] >= 0.0);
            assert!(study.runtimes_s[k] >= 0.0);
            if k > 0 {
                let prev = study.major_errors[k - 1].max(study.minor_errors[k - 1]);
                let cur = study.major_errors[k].max(study.minor_errors[k]);
                assert!(cur < prev, "errors should fall with N: {prev} -> {cur}");
            }
        }
        assert!(!study.degenerate, "all errors should be well above the floor");
        assert!(
            (-1.5..=-0.4).contains(&study.slope),
            "slope {} outside the expected decay window",
            study.slope
        );
        assert!(study.intercept.is_finite());
    }

    #[test]
    fn reference_doubling_sensitivity_matches_first_order_truncation() {
        // Errors behave like c(1/N - 1/K_ref) to first order, so raising
        // K_ref from 128 to 256 must move the measured error at N by the
        // constant-free ratio N / (2(128 - N)) — about 1.6% at N=4 but
        // 16.7% at N=32, where the reference truncation owes a quarter
        // of the measurement. Pinning the ratio checks both decays at
        // once and documents that the N=32 error is reference-limited.
        let model = two_two();
        let coarse =
            cost_convergence_study(&model, &const_stack(), &[4, 8, 16, 32], 128, 100).unwrap();
        let fine =
            cost_convergence_study(&model, &const_stack(), &[4, 8, 16, 32], 256, 100).unwrap();
        for k in 0..coarse.n_list.len() {
            let n = f64::from(coarse.n_list[k]);
            let predicted = n / (2.0 * (128.0 - n));
            for (a, b) in [
                (coarse.major_errors[k], fine.major_errors[k]),
                (coarse.minor_errors[k], fine.minor_errors[k]),
            ] {
                let change = (a - b).abs() / a;
                assert!(
                    (change - predicted).abs() <= 0.01,
                    "N={}: error moved {a:.3e} -> {b:.3e} ({:.2}% vs predicted {:.2}%)",
                    coarse.n_list[k],
                    100.0 * change,
                    100.0 * predicted
                );
                if coarse.n_list[k] <= 16 {
                    assert!(change < 0.10, "N well below K_ref should be reference-robust");
                }
            }
        }
    }

    #[test]
    fn value_errors_decrease_on_two_two() {
        let model = two_two();
        let study =
            value_convergence_study(&model, &const_stack(), &[4, 8, 16, 32], 128, 100).unwrap();
        for k in 1..study.n_list.len() {
            let prev = study.major_errors[k - 1].max(study.minor_errors[k - 1]);
            let cur = study.major_errors[k].max(study.minor_errors[k]);
            assert!(cur < prev, "value errors should fall with N: {prev} -> {cur}");
        }
    }

    #[test]
    fn population_errors_are_a_pure_function_of_the_size() {
        let model = two_two();
        let full = cost_convergence_study(&model, &const_stack(), &[4, 8, 16], 32, 100).unwrap();
        let single = cost_convergence_study(&model, &const_stack(), &[8], 32, 100).unwrap();
        assert_eq!(full.major_errors[1], single.major_errors[0]);
        assert_eq!(full.minor_errors[1], single.minor_errors[0]);
        let swapped = cost_convergence_study(&model, &const_stack(), &[16, 8, 4], 32, 100).unwrap();
        assert_eq!(swapped.n_list, full.n_list);
        assert_eq!(swapped.major_errors, full.major_errors);
        assert_eq!(swapped.minor_errors, full.minor_errors);
    }

    #[test]
    fn identical_deviations_gain_exactly_zero() {
        let model = two_two();
        let init = NPlayerInit::from_counts(0, &[3, 2]);
        let same_major = ConstantPolicy(0);
        let same_minor = ConstantPolicy(0);
        let gains = approx_nash_check(
            &model,
            &ConstantPolicy(0),
            &ConstantPolicy(0),
            5,
            &[Deviation::Major(&same_major), Deviation::Minor(&same_minor)],
            &init,
            200,
            17,
        )
        .unwrap();
        for g in &gains {
            assert_eq!(g.gain, 0.0, "common random numbers must cancel exactly");
            assert_eq!(g.se, 0.0);
            assert_eq!(g.n_paths, 200);
        }
    }

    #[test]
    fn singleton_actions_make_every_deviation_worthless() {
        let model = forced_model();
        let init = NPlayerInit::from_counts(1, &[2, 2]);
        let dev_major = ConstantPolicy(0);
        let dev_minor = ConstantPolicy(0);
        let gains = approx_nash_check(
            &model,
            &ConstantPolicy(0),
            &ConstantPolicy(0),
            4,
            &[Deviation::Major(&dev_major), Deviation::Minor(&dev_minor)],
            &init,
            150,
            3,
        )
        .unwrap();
        for g in &gains {
            assert_eq!(g.gain, 0.0);
            assert_eq!(g.se, 0.0);
        }
    }

    #[test]
    fn equilibrium_policies_resist_random_deviations() {
        let model = two_two();
        let eq = solve_equilibrium(&model, 16, 208, 0.5, 1e-3, 50, None).unwrap();
        assert!(eq.converged);

        let mut rng = substream(2718, "nash-deviations", 0);
        let mut minors = Vec::new();
        let mut majors = Vec::new();
        for d in 0..5 {
            if d < 3 {
                let mut p = eq.minor_policy.clone();
                for slot in p.table_mut() {
                    *slot = rng.gen_range(0..model.minor_actions().len() as u32);
                }
                minors.push(p);
            } else {
                let mut p = eq.major_policy.clone();
                for slot in p.table_mut() {
                    *slot = rng.gen_range(0..model.major_actions().len() as u32);
                }
                majors.push(p);
            }
        }
        let deviations: Vec<Deviation> = minors
            .iter()
            .map(|p| Deviation::Minor(p))
            .chain(majors.iter().map(|p| Deviation::Major(p)))
            .collect();

        let init = NPlayerInit::from_counts(0, &[16, 16]);
        let gains = approx_nash_check(
            &model,
            &eq.major_policy,
            &eq.minor_policy,
            32,
            &deviations,
            &init,
            20_000,
            2718,
        )
        .unwrap();
        let floor = -0.5 / f64::from(32u32).sqrt();
        let min_gain = gains.iter().map(|g| g.gain).fold(f64::INFINITY, f64::min);
        assert!(min_gain >= floor, "min gain {min_gain} below {floor}");
        for g in &gains {
            assert!(g.se.is_finite() && g.se >= 0.0);
            assert!(g.gain >= -4.0 * g.se, "gain {} vs se {}", g.gain, g.se);
        }
    }

    #[test]
    fn bad_study_inputs_are_rejected() {
        let model = two_two();
        let stack = const_stack();
        let err = cost_convergence_study(&model, &stack, &[], 8, 100).unwrap_err();
        assert!(matches!(err, CoreError::BadParameter { .. }), "empty list: {err:?}");
        let err = cost_convergence_study(&model, &stack, &[4, 4], 8, 100).unwrap_err();
        assert!(matches!(err, CoreError::BadParameter { .. }), "duplicates: {err:?}");
        let err = cost_convergence_study(&model, &stack, &[4, 8], 6, 100).unwrap_err();
        assert!(matches!(err, CoreError::BadParameter { .. }), "small K_ref: {err:?}");
        let err = cost_convergence_study(&model, &stack, &[0, 4], 8, 100).unwrap_err();
        assert!(matches!(err, CoreError::InfeasibleN { n: 0, .. }), "zero N: {err:?}");
        let err =
            cost_convergence_study(&model, &stack, &[6_000_000], 6_000_000, 100).unwrap_err();
        assert!(matches!(err, CoreError::InfeasibleN { .. }), "huge N: {err:?}");
    }
}
