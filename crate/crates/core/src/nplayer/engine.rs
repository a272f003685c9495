//! Backward Runge-Kutta engine on occupancy grids.
//!
//! Both the finite-population cost systems and the limiting HJB
//! equations are linear (or, with per-stage minimization, piecewise
//! linear) ODE systems indexed by `(player states, simplex rank)`. This
//! module holds the single implementation both use: a workspace of
//! precomputed shift ranks and occupancy counts, the per-entry
//! right-hand sides, and a fixed-step RK4 sweep in reversed time.
//!
//! Two properties are deliberate and load-bearing:
//!
//! - Cost sweeps (actions from a fixed policy) and value sweeps
//!   (actions re-minimized at every Runge-Kutta stage) evaluate the
//!   identical right-hand-side code once the action indices agree, so a
//!   cost sweep against the recorded minimizing policy reproduces the
//!   value sweep bit for bit as long as the minimizer is stable inside
//!   each step.
//! - All parallel loops are index-preserving maps, so results never
//!   depend on thread count or scheduling.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::model::{ActionSet, ModelSpec, SimplexGrid};
use crate::table::{FeedbackPolicy, MajorPolicy, MinorPolicy, Role, ValueTable};

/// Two minimizer brackets within this distance count as a tie.
pub const TIE_TOL: f64 = 1e-12;

/// Below this many entries a loop runs serially (identical results).
const PAR_THRESHOLD: usize = 4096;

/// Precomputed grid combinatorics for one `(m, resolution)` pair.
pub(crate) struct Workspace {
    pub grid: SimplexGrid,
    pub m: usize,
    pub m0: usize,
    /// Occupancy `[rank * m + state]`, the implied last state included.
    counts: Vec<u32>,
    /// Rank after one `i -> j` move, `[(rank * m + i) * m + j]`;
    /// `u32::MAX` when state `i` is empty or `i == j`.
    shifts: Vec<u32>,
}

impl Workspace {
    pub fn new(m: usize, m0: usize, resolution: u32) -> Result<Workspace> {
        let grid = SimplexGrid::new(m, resolution)?;
        let np = grid.len();
        let mut counts = vec![0u32; np * m];
        let mut shifts = vec![u32::MAX; np * m * m];
        for rank in 0..np {
            for s in 0..m {
                counts[rank * m + s] = grid.count_of(rank, s);
            }
            for i in 0..m {
                if counts[rank * m + i] == 0 {
                    continue;
                }
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    let r2 = grid
                        .shift_rank(rank, i, j)
                        .expect("a one-player move keeps the occupancy on the grid");
                    shifts[(rank * m + i) * m + j] = r2 as u32;
                }
            }
        }
        Ok(Workspace { grid, m, m0, counts, shifts })
    }

    pub fn np(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn count(&self, rank: usize, state: usize) -> u32 {
        self.counts[rank * self.m + state]
    }

    /// Rank of the post-move point; caller must have checked occupancy.
    #[inline]
    pub fn shift(&self, rank: usize, i: usize, j: usize) -> usize {
        let r2 = self.shifts[(rank * self.m + i) * self.m + j];
        debug_assert_ne!(r2, u32::MAX, "shift from an empty state");
        r2 as usize
    }
}

/// Index-preserving parallel (or serial, below threshold) map to f64.
pub(crate) fn map_f64<F: Fn(usize) -> f64 + Sync + Send>(len: usize, f: F) -> Vec<f64> {
    if len < PAR_THRESHOLD {
        (0..len).map(f).collect()
    } else {
        (0..len).into_par_iter().map(f).collect()
    }
}

/// Same, producing action indices.
fn map_u32<F: Fn(usize) -> u32 + Sync + Send>(len: usize, f: F) -> Vec<u32> {
    if len < PAR_THRESHOLD {
        (0..len).map(f).collect()
    } else {
        (0..len).into_par_iter().map(f).collect()
    }
}

/// Same, producing `(action index, extra ties)` pairs.
pub(crate) fn map_pick<F: Fn(usize) -> (u32, u32) + Sync + Send>(len: usize, f: F) -> (Vec<u32>, u64) {
    let pairs: Vec<(u32, u32)> = if len < PAR_THRESHOLD {
        (0..len).map(f).collect()
    } else {
        (0..len).into_par_iter().map(f).collect()
    };
    let ties = pairs.iter().map(|p| u64::from(p.1)).sum();
    (pairs.into_iter().map(|p| p.0).collect(), ties)
}

/// Max of `|f(idx)|` over a range (associative, so order-independent).
pub(crate) fn map_max_abs<F: Fn(usize) -> f64 + Sync + Send>(len: usize, f: F) -> f64 {
    if len < PAR_THRESHOLD {
        (0..len).fold(0.0f64, |acc, idx| acc.max(f(idx).abs()))
    } else {
        (0..len)
            .into_par_iter()
            .fold(|| 0.0f64, |acc, idx| acc.max(f(idx).abs()))
            .reduce(|| 0.0f64, f64::max)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// First strict minimizer plus the number of distinct actions whose
/// bracket lies within `TIE_TOL` of it.
pub(crate) fn argmin_with_ties<F: FnMut(usize) -> f64>(n_actions: usize, mut eval: F) -> (u32, u32) {
    let mut best = f64::INFINITY;
    let mut best_idx = 0u32;
    for a in 0..n_actions {
        let v = eval(a);
        if v < best {
            best = v;
            best_idx = a as u32;
        }
    }
    let mut ties = 0u32;
    for a in 0..n_actions {
        if a as u32 != best_idx && (eval(a) - best).abs() <= TIE_TOL {
            ties += 1;
        }
    }
    (best_idx, ties)
}

// ---------------------------------------------------------------------------
// Per-entry right-hand sides and minimizer brackets
// ---------------------------------------------------------------------------

/// Major bracket: running cost plus own-jump coupling, the quantity the
/// major player minimizes when its action does not enter minor rates.
/// With `field` supplied the crowd terms are included too (needed when
/// minor rates depend on the major action).
pub(crate) fn major_bracket(
    model: &ModelSpec,
    ws: &Workspace,
    theta: &[f64],
    t: f64,
    i0: usize,
    rank: usize,
    a0: &[f64],
    field: Option<(&ActionSet, &[u32])>,
) -> f64 {
    let np = ws.np();
    let x = ws.grid.point(rank);
    let own = theta[i0 * np + rank];
    let mut acc = model.f0(t, i0, a0, x);
    for j0 in 0..ws.m0 {
        if j0 == i0 {
            continue;
        }
        acc += model.q0(t, i0, j0, a0, x) * (theta[j0 * np + rank] - own);
    }
    if let Some((acts, field_idx)) = field {
        for i in 0..ws.m {
            let ki = ws.count(rank, i);
            if ki == 0 {
                continue;
            }
            let a = acts.point(field_idx[(i * ws.m0 + i0) * np + rank] as usize);
            for j in 0..ws.m {
                if j == i {
                    continue;
                }
                let r2 = ws.shift(rank, i, j);
                acc += f64::from(ki) * model.q(t, i, j, a, i0, a0, x) * (theta[i0 * np + r2] - own);
            }
        }
    }
    acc
}

/// Full right-hand side of one major entry: running cost (optional),
/// own jumps, and `occupancy x rate` crowd jumps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn major_entry(
    model: &ModelSpec,
    ws: &Workspace,
    theta: &[f64],
    t: f64,
    idx: usize,
    a0: &[f64],
    acts: &ActionSet,
    field_idx: &[u32],
    include_cost: bool,
) -> f64 {
    let np = ws.np();
    let i0 = idx / np;
    let rank = idx % np;
    let x = ws.grid.point(rank);
    let own = theta[idx];
    let mut acc = if include_cost { model.f0(t, i0, a0, x) } else { 0.0 };
    for j0 in 0..ws.m0 {
        if j0 == i0 {
            continue;
        }
        acc += model.q0(t, i0, j0, a0, x) * (theta[j0 * np + rank] - own);
    }
    for i in 0..ws.m {
        let ki = ws.count(rank, i);
        if ki == 0 {
            continue;
        }
        let a = acts.point(field_idx[(i * ws.m0 + i0) * np + rank] as usize);
        for j in 0..ws.m {
            if j == i {
                continue;
            }
            let r2 = ws.shift(rank, i, j);
            acc += f64::from(ki) * model.q(t, i, j, a, i0, a0, x) * (theta[i0 * np + r2] - own);
        }
    }
    acc
}

/// Minor bracket: running cost plus the tagged player's own-jump
/// coupling, the quantity a representative minor player minimizes.
/// Jumps out of an empty state are suppressed, which is exactly the
/// finite-population extension guard.
pub(crate) fn minor_bracket(
    model: &ModelSpec,
    ws: &Workspace,
    theta: &[f64],
    t: f64,
    i: usize,
    i0: usize,
    rank: usize,
    a: &[f64],
    a0: &[f64],
) -> f64 {
    let np = ws.np();
    let m0 = ws.m0;
    let x = ws.grid.point(rank);
    let own = theta[(i * m0 + i0) * np + rank];
    let mut acc = model.f(t, i, a, i0, a0, x);
    if ws.count(rank, i) >= 1 {
        for j in 0..ws.m {
            if j == i {
                continue;
            }
            let r2 = ws.shift(rank, i, j);
            acc += model.q(t, i, j, a, i0, a0, x) * (theta[(j * m0 + i0) * np + r2] - own);
        }
    }
    acc
}

/// Full right-hand side of one minor entry: running cost (optional),
/// tagged jumps, major jumps, and the other players' field jumps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn minor_entry(
    model: &ModelSpec,
    ws: &Workspace,
    theta: &[f64],
    t: f64,
    idx: usize,
    a_tag: &[f64],
    a0: &[f64],
    acts: &ActionSet,
    field_idx: &[u32],
    include_cost: bool,
) -> f64 {
    let np = ws.np();
    let m0 = ws.m0;
    let rank = idx % np;
    let combo = idx / np;
    let i0 = combo % m0;
    let i = combo / m0;
    let x = ws.grid.point(rank);
    let own = theta[idx];
    let mut acc = if include_cost { model.f(t, i, a_tag, i0, a0, x) } else { 0.0 };
    if ws.count(rank, i) >= 1 {
        for j in 0..ws.m {
            if j == i {
                continue;
            }
            let r2 = ws.shift(rank, i, j);
            acc += model.q(t, i, j, a_tag, i0, a0, x) * (theta[(j * m0 + i0) * np + r2] - own);
        }
    }
    for j0 in 0..m0 {
        if j0 == i0 {
            continue;
        }
        acc += model.q0(t, i0, j0, a0, x) * (theta[(i * m0 + j0) * np + rank] - own);
    }
    for k in 0..ws.m {
        let factor = i64::from(ws.count(rank, k)) - i64::from(k == i);
        if factor <= 0 {
            continue;
        }
        let a = acts.point(field_idx[(k * m0 + i0) * np + rank] as usize);
        for j in 0..ws.m {
            if j == k {
                continue;
            }
            let r2 = ws.shift(rank, k, j);
            acc += factor as f64 * model.q(t, k, j, a, i0, a0, x) * (theta[(i * m0 + i0) * np + r2] - own);
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Stage action resolution
// ---------------------------------------------------------------------------

/// Actions of a major policy at every `(i0, rank)`.
pub(crate) fn resolve_major_actions(ws: &Workspace, policy: &dyn MajorPolicy, t: f64) -> Vec<u32> {
    let np = ws.np();
    map_u32(ws.m0 * np, |idx| {
        let i0 = idx / np;
        let rank = idx % np;
        policy.action_on_grid(t, i0, &ws.grid, rank, ws.grid.point(rank)) as u32
    })
}

/// Actions of a minor policy at every `(i, i0, rank)`.
pub(crate) fn resolve_minor_actions(ws: &Workspace, policy: &dyn MinorPolicy, t: f64) -> Vec<u32> {
    let np = ws.np();
    let m0 = ws.m0;
    map_u32(ws.m * m0 * np, |idx| {
        let rank = idx % np;
        let combo = idx / np;
        let i0 = combo % m0;
        let i = combo / m0;
        policy.action_on_grid(t, i, i0, &ws.grid, rank, ws.grid.point(rank)) as u32
    })
}

/// Minimizing major actions with tie counting. `field` enables the
/// crowd terms in the bracket (only needed when minor rates read the
/// major action).
pub(crate) fn argmin_major_actions(
    model: &ModelSpec,
    ws: &Workspace,
    theta: &[f64],
    t: f64,
    field: Option<(&ActionSet, &[u32])>,
) -> (Vec<u32>, u64) {
    let np = ws.np();
    let acts0 = model.major_actions();
    map_pick(ws.m0 * np, |idx| {
        let i0 = idx / np;
        let rank = idx % np;
        argmin_with_ties(acts0.len(), |a_idx| {
            major_bracket(model, ws, theta, t, i0, rank, acts0.point(a_idx), field)
        })
    })
}

/// Minimizing tagged-minor actions with tie counting. `a0_idx` supplies
/// the major action per `(i0, rank)`; under a major-action-free minor
/// model it only forwards into signatures and never changes values.
pub(crate) fn argmin_minor_actions(
    model: &ModelSpec,
    ws: &Workspace,
    theta: &[f64],
    t: f64,
    a0_idx: &[u32],
) -> (Vec<u32>, u64) {
    let np = ws.np();
    let m0 = ws.m0;
    let acts = model.minor_actions();
    let acts0 = model.major_actions();
    map_pick(ws.m * m0 * np, |idx| {
        let rank = idx % np;
        let combo = idx / np;
        let i0 = combo % m0;
        let i = combo / m0;
        let a0 = acts0.point(a0_idx[i0 * np + rank] as usize);
        argmin_with_ties(acts.len(), |a_idx| {
            minor_bracket(model, ws, theta, t, i, i0, rank, acts.point(a_idx), a0)
        })
    })
}

// ---------------------------------------------------------------------------
// Backward sweeps
// ---------------------------------------------------------------------------

/// How the optimized class's actions are chosen during a sweep.
pub(crate) enum Drive<'a, P: ?Sized> {
    /// Materialize actions from a fixed policy (cost evaluation).
    Policy(&'a P),
    /// Re-minimize at every Runge-Kutta stage (value computation).
    Optimize,
}

/// Result of one backward sweep.
#[derive(Debug)]
pub(crate) struct SweepOut {
    pub table: ValueTable,
    /// Recorded minimizers, present for `Drive::Optimize`.
    pub policy: Option<FeedbackPolicy>,
    /// Distinct near-minimal actions encountered beyond the chosen ones.
    pub ties: u64,
}

/// Knot range of a sweep within a global time grid. `hi > lo`; the
/// terminal condition sits at `hi` and the sweep runs down to `lo`.
/// Stage times and the step size are derived from the global grid, so a
/// sub-range sweep retraces the full sweep's arithmetic exactly.
pub(crate) struct Span<'a> {
    pub time_grid: &'a [f64],
    pub lo: usize,
    pub hi: usize,
}

impl<'a> Span<'a> {
    pub fn full(time_grid: &'a [f64]) -> Span<'a> {
        Span { time_grid, lo: 0, hi: time_grid.len() - 1 }
    }

    fn step(&self) -> f64 {
        let n = self.time_grid.len();
        (self.time_grid[n - 1] - self.time_grid[0]) / (n - 1) as f64
    }
}

/// Shared stability bookkeeping: costs-to-go obey
/// `|theta(t)| <= max|g| + (T - t) max|f|`, so a sweep that exceeds ten
/// times that bound (plus a small floor) has gone unstable and the step
/// count is too small for the jump rates involved.
pub(crate) struct StabilityGuard {
    g_max: f64,
    f_max: f64,
    time_steps: usize,
}

impl StabilityGuard {
    pub(crate) fn new(terminal: &[f64], time_steps: usize) -> StabilityGuard {
        StabilityGuard { g_max: max_abs(terminal), f_max: 0.0, time_steps }
    }

    pub(crate) fn observe_cost(&mut self, stage_max: f64) {
        self.f_max = self.f_max.max(stage_max);
    }

    pub(crate) fn check(&self, theta: &[f64], t: f64, elapsed: f64) -> Result<()> {
        let magnitude = max_abs(theta);
        let bound = self.g_max + elapsed * self.f_max;
        if !magnitude.is_finite() || magnitude > 10.0 * bound + 1e-6 {
            return Err(CoreError::UnstableIntegration {
                t,
                magnitude,
                bound,
                suggested_time_steps: self.time_steps.saturating_mul(2),
            });
        }
        Ok(())
    }
}

/// Backward sweep of the major-player system: cost of a fixed policy or
/// value with per-stage minimization, against a fixed minor field.
pub(crate) fn sweep_major(
    model: &ModelSpec,
    ws: &Workspace,
    span: Span,
    terminal: Option<&[f64]>,
    drive: Drive<dyn MajorPolicy + '_>,
    field: &dyn MinorPolicy,
) -> Result<SweepOut> {
    let np = ws.np();
    let m0 = ws.m0;
    let slice = m0 * np;
    let steps = span.hi - span.lo;
    assert!(steps >= 1, "empty sweep span");
    let h = span.step();
    let local_tg: Vec<f64> = span.time_grid[span.lo..=span.hi].to_vec();
    let optimize = matches!(drive, Drive::Optimize);
    let full_bracket = !model.alpha0_free();

    let mut theta: Vec<f64> = match terminal {
        Some(v) => {
            assert_eq!(v.len(), slice, "terminal slice length");
            v.to_vec()
        }
        None => map_f64(slice, |idx| model.g0(idx / np, ws.grid.point(idx % np))),
    };

    let mut table = ValueTable::zeros(Role::Major, m0, ws.m, ws.grid.clone(), local_tg.clone());
    table.knot_slice_mut(steps).copy_from_slice(&theta);
    let mut policy = optimize.then(|| {
        FeedbackPolicy::first_action(Role::Major, m0, ws.m, ws.grid.clone(), local_tg, model.major_actions().clone())
    });
    let mut guard = StabilityGuard::new(&theta, steps);
    let mut ties_total = 0u64;
    let acts = model.minor_actions();
    let acts0 = model.major_actions();

    // Resolve stage actions; record into the policy when asked.
    let resolve = |t: f64,
                       theta_stage: &[f64],
                       field_idx: &[u32],
                       record: Option<(usize, &mut Option<FeedbackPolicy>)>,
                       ties: &mut u64|
     -> Vec<u32> {
        let a0 = match drive {
            Drive::Policy(p) => resolve_major_actions(ws, p, t),
            Drive::Optimize => {
                let field = full_bracket.then_some((acts, field_idx));
                let (a0, ties_here) = argmin_major_actions(model, ws, theta_stage, t, field);
                *ties += ties_here;
                a0
            }
        };
        if let Some((knot, policy)) = record {
            if let Some(p) = policy.as_mut() {
                p.table_mut()[knot * slice..(knot + 1) * slice].copy_from_slice(&a0);
            }
        }
        a0
    };

    let rhs = |t: f64, theta_stage: &[f64], a0_idx: &[u32], field_idx: &[u32]| -> Vec<f64> {
        map_f64(slice, |idx| {
            let a0 = acts0.point(a0_idx[idx] as usize);
            major_entry(model, ws, theta_stage, t, idx, a0, acts, field_idx, true)
        })
    };

    for step in 0..steps {
        let knot_hi = span.hi - step;
        let t_hi = span.time_grid[knot_hi];
        let t_lo = span.time_grid[knot_hi - 1];
        let t_mid = t_hi - 0.5 * h;

        let field_hi = resolve_minor_actions(ws, field, t_hi);
        let field_mid = resolve_minor_actions(ws, field, t_mid);
        let field_lo = resolve_minor_actions(ws, field, t_lo);

        let a0_1 = resolve(t_hi, &theta, &field_hi, Some((knot_hi - span.lo, &mut policy)), &mut ties_total);
        guard.observe_cost(map_max_abs(slice, |idx| {
            model.f0(t_hi, idx / np, acts0.point(a0_1[idx] as usize), ws.grid.point(idx % np))
        }));
        let k1 = rhs(t_hi, &theta, &a0_1, &field_hi);

        let y2: Vec<f64> = theta.iter().zip(&k1).map(|(y, k)| y + 0.5 * h * k).collect();
        let a0_2 = resolve(t_mid, &y2, &field_mid, None, &mut ties_total);
        let k2 = rhs(t_mid, &y2, &a0_2, &field_mid);

        let y3: Vec<f64> = theta.iter().zip(&k2).map(|(y, k)| y + 0.5 * h * k).collect();
        let a0_3 = resolve(t_mid, &y3, &field_mid, None, &mut ties_total);
        let k3 = rhs(t_mid, &y3, &a0_3, &field_mid);

        let y4: Vec<f64> = theta.iter().zip(&k3).map(|(y, k)| y + h * k).collect();
        let a0_4 = resolve(t_lo, &y4, &field_lo, None, &mut ties_total);
        let k4 = rhs(t_lo, &y4, &a0_4, &field_lo);

        for (idx, th) in theta.iter_mut().enumerate() {
            *th += h / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
        guard.check(&theta, t_lo, span.time_grid[span.hi] - t_lo)?;
        table.knot_slice_mut(knot_hi - 1 - span.lo).copy_from_slice(&theta);
    }

    // Minimizers at the final knot come from the fully swept values.
    if optimize {
        let t_lo = span.time_grid[span.lo];
        let field_lo = resolve_minor_actions(ws, field, t_lo);
        resolve(t_lo, &theta, &field_lo, Some((0, &mut policy)), &mut ties_total);
    }

    Ok(SweepOut { table, policy, ties: ties_total })
}

/// Backward sweep of the representative-minor system: cost of a fixed
/// tagged policy or value with per-stage minimization, against a fixed
/// major policy and minor field.
pub(crate) fn sweep_minor(
    model: &ModelSpec,
    ws: &Workspace,
    span: Span,
    terminal: Option<&[f64]>,
    drive: Drive<dyn MinorPolicy + '_>,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
) -> Result<SweepOut> {
    let np = ws.np();
    let m0 = ws.m0;
    let m = ws.m;
    let slice = m * m0 * np;
    let steps = span.hi - span.lo;
    assert!(steps >= 1, "empty sweep span");
    let h = span.step();
    let local_tg: Vec<f64> = span.time_grid[span.lo..=span.hi].to_vec();
    let optimize = matches!(drive, Drive::Optimize);
    if optimize && !model.alpha0_free() {
        return Err(CoreError::Alpha0FreeRequired {
            context: "minor value sweep: the representative player cannot observe the major action".into(),
        });
    }

    let mut theta: Vec<f64> = match terminal {
        Some(v) => {
            assert_eq!(v.len(), slice, "terminal slice length");
            v.to_vec()
        }
        None => map_f64(slice, |idx| {
            let rank = idx % np;
            let combo = idx / np;
            model.g(combo / m0, combo % m0, ws.grid.point(rank))
        }),
    };

    let mut table = ValueTable::zeros(Role::Minor, m0, m, ws.grid.clone(), local_tg.clone());
    table.knot_slice_mut(steps).copy_from_slice(&theta);
    let mut policy = optimize.then(|| {
        FeedbackPolicy::first_action(Role::Minor, m0, m, ws.grid.clone(), local_tg, model.minor_actions().clone())
    });
    let mut guard = StabilityGuard::new(&theta, steps);
    let mut ties_total = 0u64;
    let acts = model.minor_actions();
    let acts0 = model.major_actions();

    let resolve = |t: f64,
                       theta_stage: &[f64],
                       a0_idx: &[u32],
                       record: Option<(usize, &mut Option<FeedbackPolicy>)>,
                       ties: &mut u64|
     -> Vec<u32> {
        let tag = match drive {
            Drive::Policy(p) => resolve_minor_actions(ws, p, t),
            Drive::Optimize => {
                let (tag, ties_here) = argmin_minor_actions(model, ws, theta_stage, t, a0_idx);
                *ties += ties_here;
                tag
            }
        };
        if let Some((knot, policy)) = record {
            if let Some(p) = policy.as_mut() {
                p.table_mut()[knot * slice..(knot + 1) * slice].copy_from_slice(&tag);
            }
        }
        tag
    };

    let rhs = |t: f64, theta_stage: &[f64], tag_idx: &[u32], a0_idx: &[u32], field_idx: &[u32]| -> Vec<f64> {
        map_f64(slice, |idx| {
            let rank = idx % np;
            let i0 = (idx / np) % m0;
            let a_tag = acts.point(tag_idx[idx] as usize);
            let a0 = acts0.point(a0_idx[i0 * np + rank] as usize);
            minor_entry(model, ws, theta_stage, t, idx, a_tag, a0, acts, field_idx, true)
        })
    };

    for step in 0..steps {
        let knot_hi = span.hi - step;
        let t_hi = span.time_grid[knot_hi];
        let t_lo = span.time_grid[knot_hi - 1];
        let t_mid = t_hi - 0.5 * h;

        let field_hi = resolve_minor_actions(ws, field, t_hi);
        let field_mid = resolve_minor_actions(ws, field, t_mid);
        let field_lo = resolve_minor_actions(ws, field, t_lo);
        let a0_hi = resolve_major_actions(ws, major, t_hi);
        let a0_mid = resolve_major_actions(ws, major, t_mid);
        let a0_lo = resolve_major_actions(ws, major, t_lo);

        let tag_1 = resolve(t_hi, &theta, &a0_hi, Some((knot_hi - span.lo, &mut policy)), &mut ties_total);
        guard.observe_cost(map_max_abs(slice, |idx| {
            let rank = idx % np;
            let combo = idx / np;
            let i0 = combo % m0;
            model.f(
                t_hi,
                combo / m0,
                acts.point(tag_1[idx] as usize),
                i0,
                acts0.point(a0_hi[i0 * np + rank] as usize),
                ws.grid.point(rank),
            )
        }));
        let k1 = rhs(t_hi, &theta, &tag_1, &a0_hi, &field_hi);

        let y2: Vec<f64> = theta.iter().zip(&k1).map(|(y, k)| y + 0.5 * h * k).collect();
        let tag_2 = resolve(t_mid, &y2, &a0_mid, None, &mut ties_total);
        let k2 = rhs(t_mid, &y2, &tag_2, &a0_mid, &field_mid);

        let y3: Vec<f64> = theta.iter().zip(&k2).map(|(y, k)| y + 0.5 * h * k).collect();
        let tag_3 = resolve(t_mid, &y3, &a0_mid, None, &mut ties_total);
        let k3 = rhs(t_mid, &y3, &tag_3, &a0_mid, &field_mid);

        let y4: Vec<f64> = theta.iter().zip(&k3).map(|(y, k)| y + h * k).collect();
        let tag_4 = resolve(t_lo, &y4, &a0_lo, None, &mut ties_total);
        let k4 = rhs(t_lo, &y4, &tag_4, &a0_lo, &field_lo);

        for (idx, th) in theta.iter_mut().enumerate() {
            *th += h / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
        guard.check(&theta, t_lo, span.time_grid[span.hi] - t_lo)?;
        table.knot_slice_mut(knot_hi - 1 - span.lo).copy_from_slice(&theta);
    }

    if optimize {
        let t_lo = span.time_grid[span.lo];
        let a0_lo = resolve_major_actions(ws, major, t_lo);
        resolve(t_lo, &theta, &a0_lo, Some((0, &mut policy)), &mut ties_total);
    }

    Ok(SweepOut { table, policy, ties: ties_total })
}

/// Apply the generator only (no running cost) to a value slice at one
/// instant; used by the public operator entry point.
pub(crate) fn generator_apply_major(
    model: &ModelSpec,
    ws: &Workspace,
    t: f64,
    values: &[f64],
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
) -> Vec<f64> {
    let a0_idx = resolve_major_actions(ws, major, t);
    let field_idx = resolve_minor_actions(ws, field, t);
    let acts0 = model.major_actions();
    let acts = model.minor_actions();
    map_f64(values.len(), |idx| {
        let a0 = acts0.point(a0_idx[idx] as usize);
        major_entry(model, ws, values, t, idx, a0, acts, &field_idx, false)
    })
}

/// Same for the representative-minor generator.
pub(crate) fn generator_apply_minor(
    model: &ModelSpec,
    ws: &Workspace,
    t: f64,
    values: &[f64],
    tagged: &dyn MinorPolicy,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
) -> Vec<f64> {
    let np = ws.np();
    let m0 = ws.m0;
    let a0_idx = resolve_major_actions(ws, major, t);
    let tag_idx = resolve_minor_actions(ws, tagged, t);
    let field_idx = resolve_minor_actions(ws, field, t);
    let acts0 = model.major_actions();
    let acts = model.minor_actions();
    map_f64(values.len(), |idx| {
        let rank = idx % np;
        let i0 = (idx / np) % m0;
        let a_tag = acts.point(tag_idx[idx] as usize);
        let a0 = acts0.point(a0_idx[i0 * np + rank] as usize);
        minor_entry(model, ws, values, t, idx, a_tag, a0, acts, &field_idx, false)
    })
}
