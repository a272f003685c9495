//! The finite game: exact cost systems, best responses, simulation,
//! and small-population oracles.
//!
//! With `N` minor players the empirical measure lives on the discrete
//! simplex `P^N`, so expectations solve finite linear ODE systems — no
//! approximation beyond time discretization. This module provides:
//!
//! - [`solve_cost_ode`]: expected cost-to-go of a player class under
//!   fixed feedback policies, swept backward with RK4 on the occupancy
//!   grid (major pair `(i0, x)` or representative-minor triple
//!   `(i, i0, x)`).
//! - [`solve_value_ode`]: the same sweep with the acting player's
//!   control re-minimized at every Runge-Kutta stage; returns the value
//!   table and the recorded minimizing feedback policy.
//! - [`apply_generator`]: one application of the infinitesimal
//!   generator to a value slice, exposed for tests and diagnostics.
//! - [`simulate_paths`]: exact event-driven simulation by thinning.
//! - [`oracle_expected_cost`] / [`oracle_distribution`]: product-chain
//!   references for small `N`, integrated adaptively at tolerances far
//!   below everything else, so solver errors cannot hide.
//!
//! Population size `N` doubles as the grid resolution: the occupancy
//! factor `N * x_i` is then the exact integer count `k_i`, and moves
//! out of empty states vanish on their own.

pub(crate) mod engine;
mod oracle;
mod sim;

pub(crate) use engine::{Drive, Span, SweepOut, Workspace};
pub use engine::TIE_TOL;
pub use oracle::{oracle_distribution, oracle_expected_cost, OracleSolution, ProductSpace, ORACLE_STATE_CAP};
pub(crate) use sim::stat;
pub use sim::{
    simulate_paths, ClassStat, CostSummary, JumpEvent, PathCosts, PathRecord, SimOutput,
    SimulationPlan, TerminalState,
};

use crate::error::{CoreError, Result};
use crate::model::ModelSpec;
use crate::table::{uniform_time_grid, FeedbackPolicy, MajorPolicy, MinorPolicy, Role, ValueTable};

/// The feedback policies a finite-game computation runs under. `tagged`
/// (the representative minor deviating from the crowd) defaults to the
/// field policy when absent.
#[derive(Clone, Copy)]
pub struct PolicyStack<'a> {
    pub major: &'a dyn MajorPolicy,
    pub field: &'a dyn MinorPolicy,
    pub tagged: Option<&'a dyn MinorPolicy>,
}

impl<'a> PolicyStack<'a> {
    pub fn new(major: &'a dyn MajorPolicy, field: &'a dyn MinorPolicy) -> PolicyStack<'a> {
        PolicyStack { major, field, tagged: None }
    }

    pub fn with_tagged(mut self, tagged: &'a dyn MinorPolicy) -> PolicyStack<'a> {
        self.tagged = Some(tagged);
        self
    }

    /// The policy driving the representative minor player.
    pub fn tagged_or_field(&self) -> &'a dyn MinorPolicy {
        self.tagged.unwrap_or(self.field)
    }
}

/// Deterministic initial condition: one major state plus every minor
/// player's state (player `0` is the tagged representative).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NPlayerInit {
    pub major: usize,
    pub minors: Vec<usize>,
}

impl NPlayerInit {
    /// Build from occupancy counts; players are laid out in ascending
    /// state blocks, so the tagged player starts in the lowest occupied
    /// state.
    pub fn from_counts(major: usize, counts: &[u32]) -> NPlayerInit {
        let mut minors = Vec::new();
        for (state, &k) in counts.iter().enumerate() {
            minors.extend(std::iter::repeat(state).take(k as usize));
        }
        NPlayerInit { major, minors }
    }

    /// Number of minor players.
    pub fn n(&self) -> usize {
        self.minors.len()
    }
}

/// A value sweep's outputs: the value table, the recorded minimizing
/// policy, and how many near-minimizer ties were broken along the way.
#[derive(Debug, Clone)]
pub struct ValueSolve {
    pub table: ValueTable,
    pub policy: FeedbackPolicy,
    pub ties: u64,
}

/// Step count that keeps RK4 comfortably inside its stability region:
/// ten steps per unit of the worst-case total jump rate `C * N` over
/// the horizon, never fewer than 100.
pub fn default_time_steps(model: &ModelSpec, n: u32) -> usize {
    let fine = 10.0 * model.rate_bound() * model.horizon() * f64::from(n);
    (fine.ceil() as usize).max(100)
}

/// Expected total cost of the `role` player under fixed policies, as a
/// table over `(t, states, P^N)`.
pub fn solve_cost_ode(
    model: &ModelSpec,
    role: Role,
    n: u32,
    time_steps: usize,
    policies: &PolicyStack,
) -> Result<ValueTable> {
    let ws = Workspace::new(model.m(), model.m0(), n)?;
    let tg = uniform_time_grid(model.horizon(), time_steps);
    let out = match role {
        Role::Major => engine::sweep_major(
            model,
            &ws,
            Span::full(&tg),
            None,
            Drive::Policy(policies.major),
            policies.field,
        )?,
        Role::Minor => engine::sweep_minor(
            model,
            &ws,
            Span::full(&tg),
            None,
            Drive::Policy(policies.tagged_or_field()),
            policies.major,
            policies.field,
        )?,
    };
    Ok(out.table)
}

/// Best-response value of the `role` player against the given
/// environment (the environment entries for the player's own class are
/// ignored); actions are re-minimized at every integrator stage.
pub fn solve_value_ode(
    model: &ModelSpec,
    role: Role,
    n: u32,
    time_steps: usize,
    policies: &PolicyStack,
) -> Result<ValueSolve> {
    let ws = Workspace::new(model.m(), model.m0(), n)?;
    let tg = uniform_time_grid(model.horizon(), time_steps);
    let out = match role {
        Role::Major => {
            engine::sweep_major(model, &ws, Span::full(&tg), None, Drive::Optimize, policies.field)?
        }
        Role::Minor => engine::sweep_minor(
            model,
            &ws,
            Span::full(&tg),
            None,
            Drive::Optimize,
            policies.major,
            policies.field,
        )?,
    };
    let SweepOut { table, policy, ties } = out;
    Ok(ValueSolve { table, policy: policy.expect("optimizing sweeps record a policy"), ties })
}

/// Apply the infinitesimal generator (no running cost) of the finite
/// game to a value slice at time `t`. Layout: `[i0][rank]` for the
/// major pair, `[i][i0][rank]` for the minor triple, rank fastest.
pub fn apply_generator(
    model: &ModelSpec,
    role: Role,
    n: u32,
    t: f64,
    values: &[f64],
    policies: &PolicyStack,
) -> Result<Vec<f64>> {
    let ws = Workspace::new(model.m(), model.m0(), n)?;
    let expected = match role {
        Role::Major => model.m0() * ws.np(),
        Role::Minor => model.m() * model.m0() * ws.np(),
    };
    if values.len() != expected {
        return Err(CoreError::BadParameter {
            key: "values".into(),
            reason: format!(
                "expected {expected} entries for this role at population {n}, got {}",
                values.len()
            ),
        });
    }
    Ok(match role {
        Role::Major => {
            engine::generator_apply_major(model, &ws, t, values, policies.major, policies.field)
        }
        Role::Minor => engine::generator_apply_minor(
            model,
            &ws,
            t,
            values,
            policies.tagged_or_field(),
            policies.major,
            policies.field,
        ),
    })
}

/// Largest finite-difference slope of a table along one-player moves:
/// `sup N |v(x + e_ij / N) - v(x)|` over all knots, states, grid
/// points, and admissible moves. Bounded uniformly in `N` exactly when
/// the table is Lipschitz in the measure.
pub fn discrete_gradient(table: &ValueTable) -> f64 {
    let grid = table.grid();
    let n = f64::from(grid.resolution());
    let np = grid.len();
    let combos = table.slice_len() / np;
    let m = grid.m();
    let mut best = 0.0f64;
    for knot in 0..table.n_knots() {
        let slice = table.knot_slice(knot);
        for c in 0..combos {
            let v = &slice[c * np..(c + 1) * np];
            for rank in 0..np {
                for i in 0..m {
                    if grid.count_of(rank, i) == 0 {
                        continue;
                    }
                    for j in 0..m {
                        if i == j {
                            continue;
                        }
                        let r2 = grid.shift_rank(rank, i, j).expect("move stays on grid");
                        best = best.max(n * (v[r2] - v[rank]).abs());
                    }
                }
            }
        }
    }
    best
}
