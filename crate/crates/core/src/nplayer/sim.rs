//! Event-driven simulation of the finite game.
//!
//! Jump times are sampled exactly by thinning: propose exponential
//! waiting times at the constant envelope rate
//! `(N + 1) * max(m, m0) * rate_bound`, then accept and route the event
//! with a single extra uniform per proposal. No time discretization
//! enters, so the only approximation anywhere is Monte Carlo noise.
//!
//! Between jumps all states are frozen and running costs integrate with
//! the fixed five-point Gauss rule per inter-event segment (policies
//! may still vary in time inside a segment, hence the quadrature).
//!
//! Every path draws from its own counter-derived random substream, and
//! paths are collected by index, so results are independent of thread
//! count, and a pair of runs with equal seeds but different policies is
//! coupled path by path (common random numbers).

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::model::ModelSpec;
use crate::quad::gauss5_nodes;
use crate::rng::substream;
use rand::Rng;

use super::{NPlayerInit, PolicyStack};

/// How many paths to run, which substreams to use, and how many full
/// jump histories to keep.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub n_paths: usize,
    pub seed: u64,
    /// Jump histories are recorded for path indices below this cap.
    pub record_paths: usize,
}

impl SimulationPlan {
    pub fn new(n_paths: usize, seed: u64) -> SimulationPlan {
        SimulationPlan { n_paths, seed, record_paths: 0 }
    }

    pub fn recording(mut self, record_paths: usize) -> SimulationPlan {
        self.record_paths = record_paths;
        self
    }
}

/// One jump: player `0` is the major, `p >= 1` is minor player `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    pub player: u32,
    pub from: u32,
    pub to: u32,
}

/// Full jump history of one path.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub index: usize,
    pub init_major: usize,
    pub init_minors: Vec<usize>,
    pub jumps: Vec<JumpEvent>,
}

/// Joint state at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalState {
    pub major: usize,
    /// Occupancy of the minor states (sums to `N`).
    pub counts: Vec<u32>,
}

/// Realized total costs of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCosts {
    pub major: f64,
    /// Minor player `1` (the tagged representative).
    pub tagged: f64,
    /// Average over all `N` minor players.
    pub minor_avg: f64,
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStat {
    pub mean: f64,
    pub se: f64,
}

pub(crate) fn stat(values: impl Iterator<Item = f64> + Clone, n: usize) -> ClassStat {
    if n == 0 {
        return ClassStat { mean: 0.0, se: 0.0 };
    }
    // Identical samples have exactly zero spread; don't let summation
    // round-off manufacture a fake one.
    let first = values.clone().next().unwrap();
    if values.clone().all(|v| v == first) {
        return ClassStat { mean: first, se: 0.0 };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    ClassStat { mean, se: (var / n as f64).sqrt() }
}

/// Monte Carlo summary per player class.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSummary {
    pub major: ClassStat,
    pub tagged: ClassStat,
    pub minor_avg: ClassStat,
    pub n_paths: usize,
    pub seed: u64,
}

impl CostSummary {
    pub fn from_paths(paths: &[PathCosts], seed: u64) -> CostSummary {
        let n = paths.len();
        CostSummary {
            major: stat(paths.iter().map(|p| p.major), n),
            tagged: stat(paths.iter().map(|p| p.tagged), n),
            minor_avg: stat(paths.iter().map(|p| p.minor_avg), n),
            n_paths: n,
            seed,
        }
    }
}

/// Everything a simulation run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Jump histories for the first `record_paths` paths.
    pub records: Vec<PathRecord>,
    /// Terminal joint state of every path.
    pub terminals: Vec<TerminalState>,
    /// Realized costs of every path (index-aligned with `terminals`).
    pub path_costs: Vec<PathCosts>,
    pub costs: CostSummary,
}

/// Simulate `plan.n_paths` independent paths of the `N + 1` player game.
pub fn simulate_paths(
    model: &ModelSpec,
    n: u32,
    policies: &PolicyStack,
    init: &NPlayerInit,
    plan: &SimulationPlan,
) -> Result<SimOutput> {
    if n == 0 {
        return Err(CoreError::InfeasibleN { n: 0, reason: "need at least one minor player".into() });
    }
    if init.minors.len() != n as usize {
        return Err(CoreError::InfeasibleN {
            n: n as usize,
            reason: format!("initial condition lists {} minor players", init.minors.len()),
        });
    }
    if init.major >= model.m0() || init.minors.iter().any(|&s| s >= model.m()) {
        return Err(CoreError::InfeasibleN {
            n: n as usize,
            reason: "initial state out of range".into(),
        });
    }

    let results: Result<Vec<(PathCosts, TerminalState, Option<PathRecord>)>> = (0..plan.n_paths)
        .into_par_iter()
        .map(|path| run_path(model, n, policies, init, plan, path))
        .collect();
    let results = results?;

    let mut records = Vec::new();
    let mut terminals = Vec::with_capacity(results.len());
    let mut path_costs = Vec::with_capacity(results.len());
    for (costs, terminal, record) in results {
        path_costs.push(costs);
        terminals.push(terminal);
        if let Some(r) = record {
            records.push(r);
        }
    }
    let costs = CostSummary::from_paths(&path_costs, plan.seed);
    Ok(SimOutput { records, terminals, path_costs, costs })
}

fn run_path(
    model: &ModelSpec,
    n: u32,
    policies: &PolicyStack,
    init: &NPlayerInit,
    plan: &SimulationPlan,
    path: usize,
) -> Result<(PathCosts, TerminalState, Option<PathRecord>)> {
    let mut rng = substream(plan.seed, "nplayer-path", path as u64);
    let m = model.m();
    let m0 = model.m0();
    let horizon = model.horizon();
    let n_f = f64::from(n);
    let acts0 = model.major_actions();
    let acts = model.minor_actions();
    let tagged = policies.tagged_or_field();
    let lam_max = (n_f + 1.0) * m.max(m0) as f64 * model.rate_bound();

    let mut i0 = init.major;
    let mut minors = init.minors.clone();
    let mut counts = vec![0u32; m];
    for &s in &minors {
        counts[s] += 1;
    }
    let mut x = vec![0.0f64; m - 1];
    let refresh_x = |x: &mut [f64], counts: &[u32]| {
        for (d, xd) in x.iter_mut().enumerate() {
            *xd = f64::from(counts[d]) / n_f;
        }
    };
    refresh_x(&mut x, &counts);

    let mut t = 0.0f64;
    let mut major_cost = 0.0f64;
    let mut minor_costs = vec![0.0f64; n as usize];
    let mut record = (path < plan.record_paths).then(|| PathRecord {
        index: path,
        init_major: i0,
        init_minors: minors.clone(),
        jumps: Vec::new(),
    });

    loop {
        let u: f64 = rng.gen();
        let proposal = t + -(1.0 - u).ln() / lam_max;
        let segment_end = proposal.min(horizon);

        // Running costs accumulate over [t, segment_end] with frozen states.
        for (s, w) in gauss5_nodes(t, segment_end) {
            let a0 = acts0.point(policies.major.action_index(s, i0, &x));
            major_cost += w * model.f0(s, i0, a0, &x);
            for (p, &ip) in minors.iter().enumerate() {
                let pol: &dyn crate::table::MinorPolicy =
                    if p == 0 { tagged } else { policies.field };
                let a = acts.point(pol.action_index(s, ip, i0, &x));
                minor_costs[p] += w * model.f(s, ip, a, i0, a0, &x);
            }
        }
        if proposal >= horizon {
            break;
        }
        t = proposal;

        // Total jump intensity at the proposal time, accumulated in the
        // same order the routing walk below replays, so the two agree
        // bit for bit and every accepted mark lands in a slot.
        let a0 = acts0.point(policies.major.action_index(t, i0, &x));
        let mut lambda = 0.0f64;
        for j0 in 0..m0 {
            if j0 != i0 {
                lambda += model.q0(t, i0, j0, a0, &x);
            }
        }
        for (p, &ip) in minors.iter().enumerate() {
            let pol: &dyn crate::table::MinorPolicy = if p == 0 { tagged } else { policies.field };
            let a = acts.point(pol.action_index(t, ip, i0, &x));
            for j in 0..m {
                if j != ip {
                    lambda += model.q(t, ip, j, a, i0, a0, &x);
                }
            }
        }
        if lambda > lam_max * (1.0 + 1e-12) {
            return Err(CoreError::RateBoundViolation { t, rate: lambda, envelope: lam_max });
        }

        let mark: f64 = rng.gen::<f64>() * lam_max;
        if mark >= lambda {
            continue; // thinning rejection, no jump
        }

        let mut acc = 0.0f64;
        let mut jump: Option<(u32, usize, usize)> = None; // (player, from, to)
        'route: {
            for j0 in 0..m0 {
                if j0 == i0 {
                    continue;
                }
                acc += model.q0(t, i0, j0, a0, &x);
                if mark < acc {
                    jump = Some((0, i0, j0));
                    break 'route;
                }
            }
            for (p, &ip) in minors.iter().enumerate() {
                let pol: &dyn crate::table::MinorPolicy =
                    if p == 0 { tagged } else { policies.field };
                let a = acts.point(pol.action_index(t, ip, i0, &x));
                for j in 0..m {
                    if j == ip {
                        continue;
                    }
                    acc += model.q(t, ip, j, a, i0, a0, &x);
                    if mark < acc {
                        jump = Some((p as u32 + 1, ip, j));
                        break 'route;
                    }
                }
            }
        }
        let (player, from, to) =
            jump.expect("an accepted mark always lands in a routing slot");
        if let Some(r) = record.as_mut() {
            r.jumps.push(JumpEvent { t, player, from: from as u32, to: to as u32 });
        }
        if player == 0 {
            i0 = to;
        } else {
            counts[from] -= 1;
            counts[to] += 1;
            minors[player as usize - 1] = to;
            refresh_x(&mut x, &counts);
        }
    }

    // Terminal costs at the horizon.
    major_cost += model.g0(i0, &x);
    for (p, &ip) in minors.iter().enumerate() {
        minor_costs[p] += model.g(ip, i0, &x);
    }
    let costs = PathCosts {
        major: major_cost,
        tagged: minor_costs[0],
        minor_avg: minor_costs.iter().sum::<f64>() / n_f,
    };
    Ok((costs, TerminalState { major: i0, counts }, record))
}
