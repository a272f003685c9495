//! Best responses, damped fixed-point iteration, and exploitability.
//!
//! A Nash equilibrium of the limiting game is a fixed point of the
//! best-response map: the major player optimizes against the crowd
//! policy, the representative minor player optimizes against both. The
//! iteration here damps that map on *value tables* rather than on
//! policies — convex combinations of categorical actions are undefined,
//! while blended values still have well-defined argmins. Progress is
//! measured as the fraction of policy entries changed per iteration,
//! because the fixed point is a statement about policies, not values.
//!
//! Exploitability quantifies how far a policy pair is from equilibrium:
//! the gap at time zero between the cost of actually playing a policy
//! and the value of a best response against the same environment. Both
//! sides are computed by the same backward engine on the same grid, so
//! at an exact best response the gap is zero to the last bit, not
//! merely small.

use crate::error::{CoreError, Result};
use crate::hjb::{extract_policies, solve_hjb};
use crate::model::ModelSpec;
use crate::nplayer::{solve_cost_ode, PolicyStack, ValueSolve};
use crate::table::{FeedbackPolicy, MajorPolicy, MinorPolicy, Role, ValueTable};

/// Outcome of the damped best-response iteration.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    /// Major policy at the final iterate.
    pub major_policy: FeedbackPolicy,
    /// Minor policy at the final iterate.
    pub minor_policy: FeedbackPolicy,
    /// Major best-response values against the final policies.
    pub major_values: ValueTable,
    /// Minor best-response values against the final policies.
    pub minor_values: ValueTable,
    /// Fraction of policy entries changed, one entry per iteration.
    pub residual_history: Vec<f64>,
    /// `(major, minor)` exploitability after each iteration's update.
    pub exploitability_history: Vec<(f64, f64)>,
    /// Exploitability of the final policies.
    pub exploitability: (f64, f64),
    /// Iterations performed.
    pub iterations: usize,
    /// Whether the final residual reached the tolerance.
    pub converged: bool,
}

/// One application of the best-response map: the argmin policies of the
/// major system against `field` and of the minor system against
/// `(major, field)`. The two solves share only immutable inputs and run
/// concurrently.
pub fn best_response(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
    k: u32,
    time_steps: usize,
) -> Result<(FeedbackPolicy, FeedbackPolicy)> {
    let stack = PolicyStack::new(major, field);
    let (r0, r1) = rayon::join(
        || solve_hjb(model, Role::Major, &stack, k, time_steps),
        || solve_hjb(model, Role::Minor, &stack, k, time_steps),
    );
    Ok((r0?.policy, r1?.policy))
}

/// Largest signed excess of realized cost over best-response value on
/// the time-zero slice.
fn sup_gap_at_zero(cost: &ValueTable, value: &ValueTable) -> f64 {
    cost.knot_slice(0)
        .iter()
        .zip(value.knot_slice(0))
        .fold(f64::NEG_INFINITY, |acc, (j, v)| acc.max(j - v))
}

/// Exploitability plus the value solves it is measured against.
fn evaluate(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
    k: u32,
    time_steps: usize,
) -> Result<((f64, f64), ValueSolve, ValueSolve)> {
    let stack = PolicyStack::new(major, field);
    let ((j0, v0), (j1, v1)) = rayon::join(
        || {
            rayon::join(
                || solve_cost_ode(model, Role::Major, k, time_steps, &stack),
                || solve_hjb(model, Role::Major, &stack, k, time_steps),
            )
        },
        || {
            rayon::join(
                || solve_cost_ode(model, Role::Minor, k, time_steps, &stack),
                || solve_hjb(model, Role::Minor, &stack, k, time_steps),
            )
        },
    );
    let (j0, v0, j1, v1) = (j0?, v0?, j1?, v1?);
    let eps = (sup_gap_at_zero(&j0, &v0.table), sup_gap_at_zero(&j1, &v1.table));
    Ok((eps, v0, v1))
}

/// Time-zero exploitability of a policy pair: the major entry compares
/// playing `major` against the crowd `field` with a best response to
/// `field`; the minor entry compares a tagged player following `field`
/// with its best response against `(major, field)`. Both entries are
/// nonnegative up to integration error and exactly zero at a best
/// response computed on the same grid.
pub fn exploitability(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
    k: u32,
    time_steps: usize,
) -> Result<(f64, f64)> {
    Ok(evaluate(model, major, field, k, time_steps)?.0)
}

fn check_init(
    model: &ModelSpec,
    init: &(FeedbackPolicy, FeedbackPolicy),
    k: u32,
    time_steps: usize,
) -> Result<()> {
    let (p0, p1) = init;
    let ok = p0.role() == Role::Major
        && p1.role() == Role::Minor
        && p0.m0() == model.m0()
        && p1.m() == model.m()
        && p0.grid().resolution() == k
        && p1.grid().resolution() == k
        && p0.time_grid().len() == time_steps + 1
        && p1.time_grid().len() == time_steps + 1;
    if !ok {
        return Err(CoreError::BadParameter {
            key: "init".into(),
            reason: format!(
                "initial policies must be a (major, minor) pair on grid K = {k} with {} knots",
                time_steps + 1
            ),
        });
    }
    Ok(())
}

/// Damped fixed-point iteration over the best-response map.
///
/// Each iteration solves both value systems under the current policies,
/// blends the tables into the running damped state (`omega = 1` is the
/// undamped map), extracts argmin policies from the blended tables, and
/// records the fraction of changed entries as the residual. Iteration
/// stops once the residual is at most `tol` or after `max_iter` rounds;
/// exploitability of each new iterate, and of the final one, is always
/// computed. Non-convergence is not an error: the result carries the
/// final iterate with `converged = false`.
pub fn solve_equilibrium(
    model: &ModelSpec,
    k: u32,
    time_steps: usize,
    damping: f64,
    tol: f64,
    max_iter: usize,
    init: Option<(FeedbackPolicy, FeedbackPolicy)>,
) -> Result<EquilibriumResult> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(CoreError::BadParameter {
            key: "damping".into(),
            reason: format!("damping must lie in (0, 1], got {damping}"),
        });
    }
    if !(tol >= 0.0) {
        return Err(CoreError::BadParameter {
            key: "tol".into(),
            reason: format!("tolerance must be nonnegative, got {tol}"),
        });
    }
    if let Some(ref pair) = init {
        check_init(model, pair, k, time_steps)?;
    }
    let (mut cur0, mut cur1) = match init {
        Some(pair) => pair,
        None => {
            let grid = crate::model::SimplexGrid::new(model.m(), k)?;
            let tg = crate::table::uniform_time_grid(model.horizon(), time_steps);
            (
                FeedbackPolicy::first_action(
                    Role::Major,
                    model.m0(),
                    model.m(),
                    grid.clone(),
                    tg.clone(),
                    model.major_actions().clone(),
                ),
                FeedbackPolicy::first_action(
                    Role::Minor,
                    model.m0(),
                    model.m(),
                    grid,
                    tg,
                    model.minor_actions().clone(),
                ),
            )
        }
    };

    let mut blend: Option<(ValueTable, ValueTable)> = None;
    let mut cache: Option<(ValueSolve, ValueSolve)> = None;
    let mut residual_history = Vec::new();
    let mut exploitability_history = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        let (vs0, vs1) = match cache.take() {
            Some(pair) => pair,
            None => {
                let stack = PolicyStack::new(&cur0, &cur1);
                let (r0, r1) = rayon::join(
                    || solve_hjb(model, Role::Major, &stack, k, time_steps),
                    || solve_hjb(model, Role::Minor, &stack, k, time_steps),
                );
                (r0?, r1?)
            }
        };
        match blend.as_mut() {
            Some((b0, b1)) => {
                b0.blend_from(&vs0.table, damping);
                b1.blend_from(&vs1.table, damping);
            }
            None => blend = Some((vs0.table, vs1.table)),
        }
        let (b0, b1) = blend.as_ref().expect("blend state set above");
        let (next0, next1, _) = extract_policies(model, b0, b1)?;
        let changed =
            next0.count_disagreements(&cur0) + next1.count_disagreements(&cur1);
        let residual = changed as f64 / (next0.len() + next1.len()) as f64;
        cur0 = next0;
        cur1 = next1;

        let (eps, nvs0, nvs1) = evaluate(model, &cur0, &cur1, k, time_steps)?;
        residual_history.push(residual);
        exploitability_history.push(eps);
        cache = Some((nvs0, nvs1));
        if residual <= tol {
            converged = true;
            break;
        }
    }

    let (exploit, final0, final1) = match cache {
        Some((v0, v1)) => (*exploitability_history.last().expect("cache implies history"), v0, v1),
        None => evaluate(model, &cur0, &cur1, k, time_steps)?,
    };
    Ok(EquilibriumResult {
        major_policy: cur0,
        minor_policy: cur1,
        major_values: final0.table,
        minor_values: final1.table,
        iterations: residual_history.len(),
        residual_history,
        exploitability_history,
        exploitability: exploit,
        converged,
    })
}
