//! Value tables and feedback policies on time x states x simplex grid.
//!
//! Both the finite-population systems and the limiting HJB equations
//! live on the same index set: a uniform time grid, the player states,
//! and a discrete simplex. `ValueTable` stores costs-to-go there and is
//! the solver's central numeric object; `FeedbackPolicy` stores action
//! indices on the same layout.
//!
//! Index layout is `[knot][i][i0][rank]`, rank fastest; major-role
//! tables simply have no `i` axis. Time lookups snap to the nearest
//! knot (midpoint ties toward the later knot), state lookups are exact,
//! and measure lookups snap to the dominant interpolation corner
//! (ties toward the lower rank), so evaluation is total on `P`.

use crate::error::Result;
use crate::model::{interpolate, ActionSet, SimplexGrid};

/// Which player class a table or policy belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Major,
    Minor,
}

/// Number of state combinations per (knot, rank) pair.
fn state_combos(role: Role, m0: usize, m: usize) -> usize {
    match role {
        Role::Major => m0,
        Role::Minor => m * m0,
    }
}

/// A scalar field on (time knot, state(s), grid point).
#[derive(Debug, Clone)]
pub struct ValueTable {
    role: Role,
    m0: usize,
    m: usize,
    grid: SimplexGrid,
    time_grid: Vec<f64>,
    values: Vec<f64>,
}

impl ValueTable {
    /// Zero-initialized table.
    pub fn zeros(role: Role, m0: usize, m: usize, grid: SimplexGrid, time_grid: Vec<f64>) -> Self {
        assert!(!time_grid.is_empty());
        let n = time_grid.len() * state_combos(role, m0, m) * grid.len();
        ValueTable { role, m0, m, grid, time_grid, values: vec![0.0; n] }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    /// Ascending time knots, `t_0 = 0` through `t_n = T`.
    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn n_knots(&self) -> usize {
        self.time_grid.len()
    }

    /// Flat values in `[knot][state(s)][rank]` order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entries per knot.
    pub fn slice_len(&self) -> usize {
        state_combos(self.role, self.m0, self.m) * self.grid.len()
    }

    /// All values at one knot.
    pub fn knot_slice(&self, knot: usize) -> &[f64] {
        let len = self.slice_len();
        &self.values[knot * len..(knot + 1) * len]
    }

    pub fn knot_slice_mut(&mut self, knot: usize) -> &mut [f64] {
        let len = self.slice_len();
        &mut self.values[knot * len..(knot + 1) * len]
    }

    /// Offset of `(i, i0)` within a knot slice, in units of grid points.
    pub fn state_offset(&self, i: usize, i0: usize) -> usize {
        match self.role {
            Role::Major => {
                debug_assert_eq!(i, 0);
                i0
            }
            Role::Minor => i * self.m0 + i0,
        }
    }

    /// Major-role value at `(knot, i0, rank)`.
    pub fn major_at(&self, knot: usize, i0: usize, rank: usize) -> f64 {
        debug_assert_eq!(self.role, Role::Major);
        let n = self.grid.len();
        self.values[(knot * self.m0 + i0) * n + rank]
    }

    /// Minor-role value at `(knot, i, i0, rank)`.
    pub fn minor_at(&self, knot: usize, i: usize, i0: usize, rank: usize) -> f64 {
        debug_assert_eq!(self.role, Role::Minor);
        let n = self.grid.len();
        self.values[((knot * self.m + i) * self.m0 + i0) * n + rank]
    }

    /// Interpolated value at `(knot, i, i0, x)`; pass `i = 0` for major tables.
    pub fn value_at(&self, knot: usize, i: usize, i0: usize, x: &[f64]) -> Result<f64> {
        let n = self.grid.len();
        let start = (knot * state_combos(self.role, self.m0, self.m) + self.state_offset(i, i0)) * n;
        interpolate(&self.grid, &self.values[start..start + n], x)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Sup-norm distance to a table with identical layout.
    pub fn sup_diff(&self, other: &ValueTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "layout mismatch");
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// In-place convex blend `self <- (1 - omega) self + omega newer`.
    pub fn blend_from(&mut self, newer: &ValueTable, omega: f64) {
        assert_eq!(self.values.len(), newer.values.len(), "layout mismatch");
        for (v, w) in self.values.iter_mut().zip(newer.values.iter()) {
            *v = (1.0 - omega) * *v + omega * *w;
        }
    }
}

/// Snap `t` to the nearest knot of a uniform grid; midpoint ties go to
/// the later knot. A sliver of slack absorbs the rounding of times
/// computed as knot arithmetic (`t_k - h/2` and friends).
pub fn nearest_knot(time_grid: &[f64], t: f64) -> usize {
    let n = time_grid.len();
    if n <= 1 {
        return 0;
    }
    let h = (time_grid[n - 1] - time_grid[0]) / (n - 1) as f64;
    let r = (t - time_grid[0]) / h;
    let idx = (r + 0.5 + 1e-9).floor();
    (idx.max(0.0) as usize).min(n - 1)
}

/// A feedback control: one action index per (knot, state(s), grid point).
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    role: Role,
    m0: usize,
    m: usize,
    grid: SimplexGrid,
    time_grid: Vec<f64>,
    actions: ActionSet,
    table: Vec<u32>,
}

impl FeedbackPolicy {
    /// Policy initialized to the lexicographically first action.
    pub fn first_action(
        role: Role,
        m0: usize,
        m: usize,
        grid: SimplexGrid,
        time_grid: Vec<f64>,
        actions: ActionSet,
    ) -> Self {
        assert!(!time_grid.is_empty());
        let n = time_grid.len() * state_combos(role, m0, m) * grid.len();
        FeedbackPolicy { role, m0, m, grid, time_grid, actions, table: vec![0; n] }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    /// The action set this policy indexes into.
    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    /// Raw action indices, `[knot][state(s)][rank]`.
    pub fn table(&self) -> &[u32] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [u32] {
        &mut self.table
    }

    fn flat_index(&self, knot: usize, i: usize, i0: usize, rank: usize) -> usize {
        let combos = state_combos(self.role, self.m0, self.m);
        let offset = match self.role {
            Role::Major => i0,
            Role::Minor => i * self.m0 + i0,
        };
        (knot * combos + offset) * self.grid.len() + rank
    }

    /// Action index at an exact table position (pass `i = 0` for major).
    pub fn at(&self, knot: usize, i: usize, i0: usize, rank: usize) -> usize {
        self.table[self.flat_index(knot, i, i0, rank)] as usize
    }

    pub fn set(&mut self, knot: usize, i: usize, i0: usize, rank: usize, action: usize) {
        let idx = self.flat_index(knot, i, i0, rank);
        self.table[idx] = action as u32;
    }

    /// Evaluate at arbitrary `(t, x)`: nearest knot, dominant grid corner.
    pub fn action(&self, t: f64, i: usize, i0: usize, x: &[f64]) -> usize {
        let knot = nearest_knot(&self.time_grid, t);
        let rank = self
            .grid
            .nearest_rank(x)
            .expect("policy evaluated at a point outside the simplex");
        self.at(knot, i, i0, rank)
    }

    /// Smoothed evaluation for numeric actions: interpolation weights
    /// applied to the action coordinates themselves (opt-in; default
    /// evaluation everywhere else is nearest-node).
    pub fn action_smoothed(&self, t: f64, i: usize, i0: usize, x: &[f64]) -> Result<Vec<f64>> {
        let knot = nearest_knot(&self.time_grid, t);
        let weights = self.grid.cell_weights(x)?;
        let mut out = vec![0.0; self.actions.dim()];
        for (rank, w) in weights {
            let coords = self.actions.point(self.at(knot, i, i0, rank));
            for (o, c) in out.iter_mut().zip(coords.iter()) {
                *o += w * c;
            }
        }
        Ok(out)
    }

    /// Number of entries where two same-layout policies disagree.
    pub fn count_disagreements(&self, other: &FeedbackPolicy) -> usize {
        assert_eq!(self.table.len(), other.table.len(), "layout mismatch");
        self.table.iter().zip(other.table.iter()).filter(|(a, b)| a != b).count()
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Major-player feedback rule used by solvers and simulators.
pub trait MajorPolicy: Send + Sync {
    /// Action index given time, major state, and embedded measure.
    fn action_index(&self, t: f64, i0: usize, x: &[f64]) -> usize;

    /// Fast path when the caller already sits on a grid node.
    fn action_on_grid(&self, t: f64, i0: usize, _grid: &SimplexGrid, _rank: usize, x: &[f64]) -> usize {
        self.action_index(t, i0, x)
    }
}

/// Minor-player feedback rule.
pub trait MinorPolicy: Send + Sync {
    /// Action index given time, own state, major state, and measure.
    fn action_index(&self, t: f64, i: usize, i0: usize, x: &[f64]) -> usize;

    /// Fast path when the caller already sits on a grid node.
    fn action_on_grid(
        &self,
        t: f64,
        i: usize,
        i0: usize,
        _grid: &SimplexGrid,
        _rank: usize,
        x: &[f64],
    ) -> usize {
        self.action_index(t, i, i0, x)
    }
}

impl MajorPolicy for FeedbackPolicy {
    fn action_index(&self, t: f64, i0: usize, x: &[f64]) -> usize {
        debug_assert_eq!(self.role, Role::Major);
        self.action(t, 0, i0, x)
    }

    fn action_on_grid(&self, t: f64, i0: usize, grid: &SimplexGrid, rank: usize, x: &[f64]) -> usize {
        debug_assert_eq!(self.role, Role::Major);
        if grid.same_layout(&self.grid) {
            self.at(nearest_knot(&self.time_grid, t), 0, i0, rank)
        } else {
            MajorPolicy::action_index(self, t, i0, x)
        }
    }
}

impl MinorPolicy for FeedbackPolicy {
    fn action_index(&self, t: f64, i: usize, i0: usize, x: &[f64]) -> usize {
        debug_assert_eq!(self.role, Role::Minor);
        self.action(t, i, i0, x)
    }

    fn action_on_grid(
        &self,
        t: f64,
        i: usize,
        i0: usize,
        grid: &SimplexGrid,
        rank: usize,
        x: &[f64],
    ) -> usize {
        debug_assert_eq!(self.role, Role::Minor);
        if grid.same_layout(&self.grid) {
            self.at(nearest_knot(&self.time_grid, t), i, i0, rank)
        } else {
            MinorPolicy::action_index(self, t, i, i0, x)
        }
    }
}

/// The same action everywhere; implements both roles.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub usize);

impl MajorPolicy for ConstantPolicy {
    fn action_index(&self, _t: f64, _i0: usize, _x: &[f64]) -> usize {
        self.0
    }
}

impl MinorPolicy for ConstantPolicy {
    fn action_index(&self, _t: f64, _i: usize, _i0: usize, _x: &[f64]) -> usize {
        self.0
    }
}

/// Closure-backed major policy, mostly for tests.
pub struct MajorFn<F: Fn(f64, usize, &[f64]) -> usize + Send + Sync>(pub F);

impl<F: Fn(f64, usize, &[f64]) -> usize + Send + Sync> MajorPolicy for MajorFn<F> {
    fn action_index(&self, t: f64, i0: usize, x: &[f64]) -> usize {
        (self.0)(t, i0, x)
    }
}

/// Closure-backed minor policy, mostly for tests.
pub struct MinorFn<F: Fn(f64, usize, usize, &[f64]) -> usize + Send + Sync>(pub F);

impl<F: Fn(f64, usize, usize, &[f64]) -> usize + Send + Sync> MinorPolicy for MinorFn<F> {
    fn action_index(&self, t: f64, i: usize, i0: usize, x: &[f64]) -> usize {
        (self.0)(t, i, i0, x)
    }
}

/// Uniform knots `0 = t_0 < ... < t_steps = horizon`; the endpoint is
/// exactly `horizon` so step sizes derived from the grid are stable.
pub fn uniform_time_grid(horizon: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 1);
    (0..=steps)
        .map(|k| if k == steps { horizon } else { horizon * k as f64 / steps as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(k: u32) -> SimplexGrid {
        SimplexGrid::new(2, k).unwrap()
    }

    #[test]
    fn layout_round_trips() {
        let mut table = ValueTable::zeros(Role::Minor, 2, 3, grid2(4), uniform_time_grid(1.0, 2));
        let n = table.grid().len();
        for knot in 0..3 {
            for i in 0..3 {
                for i0 in 0..2 {
                    for rank in 0..n {
                        let val = (((knot * 3 + i) * 2 + i0) * n + rank) as f64;
                        let off = table.state_offset(i, i0) * n + rank;
                        table.knot_slice_mut(knot)[off] = val;
                    }
                }
            }
        }
        assert_eq!(table.minor_at(2, 1, 1, 3), ((2 * 3 + 1) * 2 + 1) as f64 * n as f64 + 3.0);
    }

    #[test]
    fn nearest_knot_breaks_midpoint_ties_later() {
        let grid = uniform_time_grid(1.0, 4); // knots at 0, .25, .5, .75, 1
        assert_eq!(nearest_knot(&grid, 0.0), 0);
        assert_eq!(nearest_knot(&grid, 0.12), 0);
        assert_eq!(nearest_knot(&grid, 0.13), 1);
        assert_eq!(nearest_knot(&grid, 0.125), 1); // exact midpoint -> later
        assert_eq!(nearest_knot(&grid, 0.99), 4);
        assert_eq!(nearest_knot(&grid, 5.0), 4); // clamped
        assert_eq!(nearest_knot(&grid, -1.0), 0);
    }

    #[test]
    fn feedback_policy_evaluates_nearest_node() {
        let actions = ActionSet::scalar(&[0.0, 1.0, 2.0]).unwrap();
        let mut p = FeedbackPolicy::first_action(
            Role::Major, 2, 1, grid2(2), uniform_time_grid(1.0, 1), actions,
        );
        p.set(0, 0, 1, 2, 2); // knot t=0, i0=1, x=1.0
        p.set(1, 0, 1, 2, 1); // knot t=1
        assert_eq!(MajorPolicy::action_index(&p, 0.1, 1, &[0.9]), 2);
        assert_eq!(MajorPolicy::action_index(&p, 0.9, 1, &[0.9]), 1);
        assert_eq!(MajorPolicy::action_index(&p, 0.9, 0, &[0.9]), 0);
    }

    #[test]
    fn smoothed_action_blends_coordinates() {
        let actions = ActionSet::scalar(&[0.0, 1.0]).unwrap();
        let mut p = FeedbackPolicy::first_action(
            Role::Minor, 2, 2, grid2(2), uniform_time_grid(1.0, 1), actions,
        );
        p.set(0, 0, 0, 1, 1); // action 1 at x = 0.5
        let a = p.action_smoothed(0.0, 0, 0, &[0.25]).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15); // halfway between actions 0 and 1
    }

    #[test]
    fn blending_is_convex() {
        let grid = grid2(2);
        let tg = uniform_time_grid(1.0, 1);
        let mut a = ValueTable::zeros(Role::Major, 2, 1, grid.clone(), tg.clone());
        let mut b = ValueTable::zeros(Role::Major, 2, 1, grid, tg);
        a.values_mut().fill(1.0);
        b.values_mut().fill(3.0);
        a.blend_from(&b, 0.25);
        assert!(a.values().iter().all(|v| (*v - 1.5).abs() < 1e-15));
    }
}
