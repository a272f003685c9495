//! Limit dynamics of the population: the measure-flow vector field, its
//! deterministic integration, piecewise-deterministic simulation of the
//! (major state, measure) pair and of the (tagged minor, major, measure)
//! triple, and Monte Carlo cost estimates in the limit regime.
//!
//! Between jumps the embedded measure follows the characteristic ODE
//! `x'_j = sum_i x_i q(t, i, j, a_i, i0, a0, x)`, where the sum runs
//! over *all* minor states (the diagonal carries the outflow), minor
//! actions come from the field policy and the last occupancy is implied
//! by `1 - sum x`. Only jumps of the discrete states are random: the
//! major state jumps at rate `q0`, and in triple mode the tagged minor
//! jumps at rate `q`; neither jump displaces the measure.
//!
//! Jumps are sampled by thinning against the constant envelope
//! `rate_bound * (m0 + m)`: proposals arrive at that rate, and a uniform
//! mark on `[0, envelope)` both accepts (mark below the total intensity)
//! and routes (walking the per-transition partial sums). The acceptance
//! sum and the routing walk accumulate identical terms in identical
//! order, so an accepted mark always lands in a concrete transition.
//!
//! Flow integration uses fixed-leg classic RK4. Running costs accumulate
//! by the five-point Gauss-Legendre rule per leg, with the measure
//! advanced through the quadrature nodes by RK4 sub-steps so integrand
//! and state are evaluated at the same instants. Tiny integration drift
//! off the simplex is clipped each step; drift beyond 1e-6 aborts with
//! [`CoreError::FlowLeftSimplex`], since a well-posed model keeps its
//! field pointing inward at the boundary.

use crate::error::{CoreError, Result};
use crate::model::{simplex_excess, ModelSpec};
use crate::nplayer::{stat, ClassStat, PolicyStack};
use crate::ode::rk4_step;
use crate::quad::gauss5_nodes;
use crate::rng::substream;
use crate::table::{uniform_time_grid, MajorPolicy, MinorPolicy};
use rand::Rng;
use rayon::prelude::*;

/// Largest tolerated excursion off the simplex before the flow errors.
const FLOW_DRIFT_MAX: f64 = 1e-6;

/// Which limiting process to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdmpMode {
    /// `(major state, measure)` with the major player's cost.
    Pair,
    /// `(tagged minor, major state, measure)` with both costs.
    Triple,
}

/// Initial condition of the limit process.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmpInit {
    pub major: usize,
    /// Tagged minor state; required in triple mode, ignored in pair mode.
    pub tagged: Option<usize>,
    /// Embedded initial measure (first `m - 1` proportions).
    pub x: Vec<f64>,
}

/// Batch parameters for [`simulate_pdmp`].
#[derive(Debug, Clone)]
pub struct PdmpPlan {
    pub n_paths: usize,
    pub seed: u64,
    /// Size of the uniform output grid over `[0, horizon]`, ends included.
    pub output_points: usize,
    /// RK4 leg length along the flow; `None` picks `horizon / 400`.
    pub flow_step: Option<f64>,
    /// How many leading paths keep their sample trajectories. Recording
    /// never changes the numbers: the integrator always splits legs at
    /// output times, recorded or not.
    pub record_paths: usize,
}

impl PdmpPlan {
    /// Record every path on a 200-point output grid.
    pub fn new(n_paths: usize, seed: u64) -> PdmpPlan {
        PdmpPlan { n_paths, seed, output_points: 200, flow_step: None, record_paths: n_paths }
    }

    /// Override the output grid size.
    pub fn with_output_points(mut self, points: usize) -> PdmpPlan {
        self.output_points = points;
        self
    }

    /// Override the RK4 leg length.
    pub fn with_flow_step(mut self, step: f64) -> PdmpPlan {
        self.flow_step = Some(step);
        self
    }

    /// Keep trajectories only for the first `paths` paths.
    pub fn with_recording(mut self, paths: usize) -> PdmpPlan {
        self.record_paths = paths;
        self
    }
}

/// One recorded point of a path: time, discrete states, measure.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmpSample {
    pub t: f64,
    pub major: usize,
    /// Tagged minor state (triple mode).
    pub tagged: Option<usize>,
    pub x: Vec<f64>,
}

/// One simulated limit path.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmpPath {
    pub index: usize,
    /// `(time, new major state)` per major jump.
    pub major_jumps: Vec<(f64, usize)>,
    /// `(time, new tagged state)` per tagged-minor jump (triple mode).
    pub tagged_jumps: Vec<(f64, usize)>,
    /// Output-grid samples merged with jump epochs, time-ascending;
    /// empty when the path is beyond `record_paths`.
    pub samples: Vec<PdmpSample>,
    /// Realized major cost along this path.
    pub major_cost: f64,
    /// Realized tagged-minor cost (triple mode).
    pub tagged_cost: Option<f64>,
}

/// Simulated batch with per-class cost statistics.
#[derive(Debug, Clone)]
pub struct PdmpOutput {
    pub paths: Vec<PdmpPath>,
    pub major: ClassStat,
    /// Present in triple mode.
    pub tagged: Option<ClassStat>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Monte Carlo cost estimate for the mode's own objective: the major
/// cost in pair mode, the tagged-minor cost in triple mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCost {
    pub mean: f64,
    pub se: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// The measure-flow field at `(t, i0, x)`: component `j < m - 1` is
/// `sum_i x_i q(t, i, j, a_i, i0, a0, x)` over every minor state `i`,
/// with actions resolved from the given policies.
pub fn vector_field(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
    t: f64,
    i0: usize,
    x: &[f64],
) -> Vec<f64> {
    let mut v = vec![0.0; model.m() - 1];
    field_into(model, major, field, t, i0, x, &mut v);
    v
}

fn field_into(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
    t: f64,
    i0: usize,
    x: &[f64],
    out: &mut [f64],
) {
    let m = model.m();
    let a0 = model.major_actions().point(major.action_index(t, i0, x));
    out.fill(0.0);
    let mut tail = 1.0;
    for &xi in x {
        tail -= xi;
    }
    for i in 0..m {
        let weight = if i + 1 == m { tail } else { x[i] };
        let a = model.minor_actions().point(field.action_index(t, i, i0, x));
        for (j, vj) in out.iter_mut().enumerate() {
            *vj += weight * model.q(t, i, j, a, i0, a0, x);
        }
    }
}

/// Clamp round-off drift back onto the simplex; excursions beyond
/// [`FLOW_DRIFT_MAX`] are fatal.
fn clip_to_simplex(t: f64, y: &mut [f64]) -> Result<()> {
    let excess = simplex_excess(y);
    if !excess.is_finite() || excess > FLOW_DRIFT_MAX {
        return Err(CoreError::FlowLeftSimplex { t, point: y.to_vec(), excess });
    }
    let mut sum = 0.0;
    for c in y.iter_mut() {
        *c = c.max(0.0);
        sum += *c;
    }
    if sum > 1.0 {
        for c in y.iter_mut() {
            *c /= sum;
        }
    }
    Ok(())
}

fn check_measure(model: &ModelSpec, x: &[f64]) -> Result<()> {
    if x.len() != model.m() - 1 {
        return Err(CoreError::BadParameter {
            key: "x".into(),
            reason: format!("embedded measure needs {} components, got {}", model.m() - 1, x.len()),
        });
    }
    let excess = simplex_excess(x);
    if !excess.is_finite() || excess > 1e-9 {
        return Err(CoreError::BadParameter {
            key: "x".into(),
            reason: format!("measure lies outside the simplex by {excess:.3e}"),
        });
    }
    Ok(())
}

/// Integrate the measure flow from `x0` over `[t0, t1]` with the major
/// state frozen at `i0`; returns `(time, measure)` at every RK4 knot.
#[allow(clippy::too_many_arguments)]
pub fn flow(
    model: &ModelSpec,
    major: &dyn MajorPolicy,
    field: &dyn MinorPolicy,
    i0: usize,
    x0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    check_measure(model, x0)?;
    if !(t0 <= t1 && t1 <= model.horizon() + 1e-12) {
        return Err(CoreError::BadParameter {
            key: "t0/t1".into(),
            reason: format!("need 0 <= t0 <= t1 <= horizon, got [{t0}, {t1}]"),
        });
    }
    if !(step > 0.0) {
        return Err(CoreError::BadParameter {
            key: "step".into(),
            reason: format!("need a positive step, got {step}"),
        });
    }
    let mut y = x0.to_vec();
    let mut out = vec![(t0, y.clone())];
    if t1 == t0 {
        return Ok(out);
    }
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let mut f =
        |t: f64, y: &[f64], dy: &mut [f64]| field_into(model, major, field, t, i0, y, dy);
    for k in 0..n {
        let ta = t0 + (t1 - t0) * k as f64 / n as f64;
        let tb = if k + 1 == n { t1 } else { t0 + (t1 - t0) * (k + 1) as f64 / n as f64 };
        rk4_step(&mut f, ta, tb - ta, &mut y);
        clip_to_simplex(tb, &mut y)?;
        out.push((tb, y.clone()));
    }
    Ok(out)
}

/// Everything a path needs besides its mutable state.
struct Ctx<'a> {
    model: &'a ModelSpec,
    major: &'a dyn MajorPolicy,
    field: &'a dyn MinorPolicy,
    tagged: &'a dyn MinorPolicy,
}

struct PathState {
    t: f64,
    major: usize,
    tagged: Option<usize>,
    x: Vec<f64>,
    major_cost: f64,
    tagged_cost: f64,
}

impl PathState {
    fn sample(&self) -> PdmpSample {
        PdmpSample { t: self.t, major: self.major, tagged: self.tagged, x: self.x.clone() }
    }
}

/// March the measure from `st.t` to `t_target` in RK4 legs of length at
/// most `leg`, accumulating Gauss-Legendre running costs along the way.
fn advance_plain(ctx: &Ctx, st: &mut PathState, t_target: f64, leg: f64) -> Result<()> {
    if t_target <= st.t {
        return Ok(());
    }
    let i0 = st.major;
    let tag = st.tagged;
    let start = st.t;
    let span = t_target - start;
    let n_legs = ((span / leg).ceil() as usize).max(1);
    let mut x = std::mem::take(&mut st.x);
    let mut f =
        |t: f64, y: &[f64], dy: &mut [f64]| field_into(ctx.model, ctx.major, ctx.field, t, i0, y, dy);
    let mut outcome = Ok(());
    'legs: for k in 0..n_legs {
        let sa = start + span * k as f64 / n_legs as f64;
        let sb = if k + 1 == n_legs { t_target } else { start + span * (k + 1) as f64 / n_legs as f64 };
        let mut cur = sa;
        for (node, w) in gauss5_nodes(sa, sb) {
            rk4_step(&mut f, cur, node - cur, &mut x);
            if let Err(e) = clip_to_simplex(node, &mut x) {
                outcome = Err(e);
                break 'legs;
            }
            let a0 = ctx.model.major_actions().point(ctx.major.action_index(node, i0, &x));
            st.major_cost += w * ctx.model.f0(node, i0, a0, &x);
            if let Some(tg) = tag {
                let a = ctx.model.minor_actions().point(ctx.tagged.action_index(node, tg, i0, &x));
                st.tagged_cost += w * ctx.model.f(node, tg, a, i0, a0, &x);
            }
            cur = node;
        }
        rk4_step(&mut f, cur, sb - cur, &mut x);
        if let Err(e) = clip_to_simplex(sb, &mut x) {
            outcome = Err(e);
            break 'legs;
        }
    }
    st.x = x;
    st.t = t_target;
    outcome
}

/// Advance to `t_target`, splitting at pending output times so the
/// integration pattern never depends on whether samples are recorded.
#[allow(clippy::too_many_arguments)]
fn advance(
    ctx: &Ctx,
    st: &mut PathState,
    t_target: f64,
    leg: f64,
    out_times: &[f64],
    next_out: &mut usize,
    samples: &mut Vec<PdmpSample>,
    record: bool,
) -> Result<()> {
    while *next_out < out_times.len() && out_times[*next_out] <= t_target {
        advance_plain(ctx, st, out_times[*next_out], leg)?;
        if record {
            samples.push(st.sample());
        }
        *next_out += 1;
    }
    advance_plain(ctx, st, t_target, leg)
}

fn run_path(
    model: &ModelSpec,
    mode: PdmpMode,
    policies: &PolicyStack,
    init: &PdmpInit,
    plan: &PdmpPlan,
    index: usize,
) -> Result<PdmpPath> {
    let m = model.m();
    let m0 = model.m0();
    let horizon = model.horizon();
    let leg = plan.flow_step.unwrap_or(horizon / 400.0);
    let envelope = model.rate_bound() * (m0 + m) as f64;
    let acts0 = model.major_actions();
    let acts = model.minor_actions();
    let ctx = Ctx {
        model,
        major: policies.major,
        field: policies.field,
        tagged: policies.tagged_or_field(),
    };
    let mut rng = substream(plan.seed, "pdmp-path", index as u64);
    let record = index < plan.record_paths;

    let out_times = uniform_time_grid(horizon, plan.output_points - 1);
    let mut next_out = 1usize; // time zero is recorded below
    let mut samples = Vec::new();
    let mut major_jumps = Vec::new();
    let mut tagged_jumps = Vec::new();

    let mut st = PathState {
        t: 0.0,
        major: init.major,
        tagged: matches!(mode, PdmpMode::Triple).then(|| init.tagged.unwrap_or(0)),
        x: init.x.clone(),
        major_cost: 0.0,
        tagged_cost: 0.0,
    };
    if record {
        samples.push(st.sample());
    }

    loop {
        let u: f64 = rng.gen();
        let proposal = st.t + -(1.0 - u).ln() / envelope;
        if proposal >= horizon {
            advance(&ctx, &mut st, horizon, leg, &out_times, &mut next_out, &mut samples, record)?;
            break;
        }
        advance(&ctx, &mut st, proposal, leg, &out_times, &mut next_out, &mut samples, record)?;
        let t = st.t;

        // Total jump intensity, accumulated in the same order the
        // routing walk below replays, so the two agree bit for bit.
        let a0 = acts0.point(policies.major.action_index(t, st.major, &st.x));
        let mut lambda = 0.0f64;
        for j0 in 0..m0 {
            if j0 != st.major {
                lambda += model.q0(t, st.major, j0, a0, &st.x);
            }
        }
        if let Some(tg) = st.tagged {
            let a = acts.point(ctx.tagged.action_index(t, tg, st.major, &st.x));
            for j in 0..m {
                if j != tg {
                    lambda += model.q(t, tg, j, a, st.major, a0, &st.x);
                }
            }
        }
        if lambda > envelope * (1.0 + 1e-12) {
            return Err(CoreError::RateBoundViolation { t, rate: lambda, envelope });
        }

        let mark: f64 = rng.gen::<f64>() * envelope;
        if mark >= lambda {
            continue; // thinning rejection
        }

        let mut acc = 0.0f64;
        let mut jump: Option<(bool, usize)> = None; // (is_major, destination)
        'route: {
            for j0 in 0..m0 {
                if j0 == st.major {
                    continue;
                }
                acc += model.q0(t, st.major, j0, a0, &st.x);
                if mark < acc {
                    jump = Some((true, j0));
                    break 'route;
                }
            }
            if let Some(tg) = st.tagged {
                let a = acts.point(ctx.tagged.action_index(t, tg, st.major, &st.x));
                for j in 0..m {
                    if j == tg {
                        continue;
                    }
                    acc += model.q(t, tg, j, a, st.major, a0, &st.x);
                    if mark < acc {
                        jump = Some((false, j));
                        break 'route;
                    }
                }
            }
        }
        let (is_major, to) = jump.expect("an accepted mark always lands in a routing slot");
        if is_major {
            st.major = to;
            major_jumps.push((t, to));
        } else {
            st.tagged = Some(to);
            tagged_jumps.push((t, to));
        }
        if record {
            samples.push(st.sample());
        }
    }

    st.major_cost += model.g0(st.major, &st.x);
    if let Some(tg) = st.tagged {
        st.tagged_cost += model.g(tg, st.major, &st.x);
    }
    Ok(PdmpPath {
        index,
        major_jumps,
        tagged_jumps,
        samples,
        major_cost: st.major_cost,
        tagged_cost: st.tagged.map(|_| st.tagged_cost),
    })
}

/// Simulate limit paths under fixed policies. In triple mode the tagged
/// minor follows `policies.tagged` when set, the field policy otherwise.
pub fn simulate_pdmp(
    model: &ModelSpec,
    mode: PdmpMode,
    policies: &PolicyStack,
    init: &PdmpInit,
    plan: &PdmpPlan,
) -> Result<PdmpOutput> {
    if plan.n_paths == 0 {
        return Err(CoreError::BadParameter {
            key: "n_paths".into(),
            reason: "need at least one path".into(),
        });
    }
    if plan.output_points < 2 {
        return Err(CoreError::BadParameter {
            key: "output_points".into(),
            reason: "need at least the two endpoint samples".into(),
        });
    }
    if let Some(step) = plan.flow_step {
        if !(step > 0.0) {
            return Err(CoreError::BadParameter {
                key: "flow_step".into(),
                reason: format!("need a positive step, got {step}"),
            });
        }
    }
    check_measure(model, &init.x)?;
    if init.major >= model.m0() {
        return Err(CoreError::BadParameter {
            key: "major".into(),
            reason: format!("state {} out of range for m0 = {}", init.major, model.m0()),
        });
    }
    match (mode, init.tagged) {
        (PdmpMode::Triple, None) => {
            return Err(CoreError::BadParameter {
                key: "tagged".into(),
                reason: "triple mode needs a tagged initial state".into(),
            })
        }
        (PdmpMode::Triple, Some(i)) if i >= model.m() => {
            return Err(CoreError::BadParameter {
                key: "tagged".into(),
                reason: format!("state {i} out of range for m = {}", model.m()),
            })
        }
        _ => {}
    }

    let paths = (0..plan.n_paths)
        .into_par_iter()
        .map(|idx| run_path(model, mode, policies, init, plan, idx))
        .collect::<Result<Vec<PdmpPath>>>()?;
    let major = stat(paths.iter().map(|p| p.major_cost), paths.len());
    let tagged = matches!(mode, PdmpMode::Triple)
        .then(|| stat(paths.iter().map(|p| p.tagged_cost.unwrap_or(0.0)), paths.len()));
    Ok(PdmpOutput { paths, major, tagged, n_paths: plan.n_paths, seed: plan.seed })
}

/// Monte Carlo estimate of the mode's objective; trajectories are not
/// recorded, so arbitrarily many paths stay cheap.
pub fn mc_cost(
    model: &ModelSpec,
    mode: PdmpMode,
    policies: &PolicyStack,
    init: &PdmpInit,
    n_paths: usize,
    seed: u64,
) -> Result<McCost> {
    let out = simulate_pdmp(model, mode, policies, init, &PdmpPlan::new(n_paths, seed).with_recording(0))?;
    let class = match mode {
        PdmpMode::Pair => out.major,
        PdmpMode::Triple => out.tagged.expect("triple statistics"),
    };
    Ok(McCost { mean: class.mean, se: class.se, n_paths, seed })
}
