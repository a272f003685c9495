//! Model interface: state counts, action sets, rate and cost plug-ins.
//!
//! A model couples one major player on states `0 .. m0` with a continuum
//! (or finite crowd) of minor players on states `0 .. m`. All problem
//! data enters through the [`Dynamics`] trait:
//!
//! * `q0(t, i0, j0, a0, x)` — major transition rates, a proper Q-matrix
//!   row-by-row in `j0` (off-diagonals nonnegative, rows summing to 0);
//! * `q(t, i, j, a, i0, a0, x)` — minor transition rates;
//! * `f0`, `f` — running costs; `g0`, `g` — terminal costs.
//!
//! `x` is always the embedded measure: the first `m - 1` proportions of
//! the minor population. Implementations must be pure functions of their
//! arguments; everything downstream (solvers, simulators, oracles)
//! assumes evaluations can be repeated and reordered freely.

pub mod builtin;
mod grid;

pub use builtin::{load_builtin, BUILTIN_NAMES};
pub use grid::{e_shift, interpolate, simplex_excess, SimplexGrid, MAX_GRID_POINTS, SIMPLEX_TOL};

use crate::error::{CoreError, Result};
use crate::rng::substream;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A finite ordered set of action points in `R^d`.
///
/// Points are sorted lexicographically at construction, so "the first
/// minimizer" is a deterministic, documented tie-break everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    dim: usize,
    points: Vec<f64>,
}

impl ActionSet {
    /// Build from explicit points; sorts lexicographically, rejects
    /// duplicates, empty sets, and non-finite coordinates.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::BadParameter {
                key: "actions".into(),
                reason: "action set must not be empty".into(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(CoreError::BadParameter {
                key: "actions".into(),
                reason: "action points need at least one coordinate".into(),
            });
        }
        let mut sorted = points;
        for p in &sorted {
            if p.len() != dim {
                return Err(CoreError::BadParameter {
                    key: "actions".into(),
                    reason: format!("inconsistent action dimension: {} vs {}", p.len(), dim),
                });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(CoreError::BadParameter {
                    key: "actions".into(),
                    reason: format!("non-finite action coordinate in {p:?}"),
                });
            }
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates compare totally"));
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(CoreError::BadParameter {
                    key: "actions".into(),
                    reason: format!("duplicate action point {:?}", pair[0]),
                });
            }
        }
        let mut flat = Vec::with_capacity(sorted.len() * dim);
        for p in &sorted {
            flat.extend_from_slice(p);
        }
        Ok(ActionSet { dim, points: flat })
    }

    /// Convenience constructor for one-dimensional action grids.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// Number of actions.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// True when empty (constructor forbids this).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Coordinate dimension of each action.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of action `idx`.
    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Iterate `(index, coordinates)` in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        (0..self.len()).map(move |i| (i, self.point(i)))
    }
}

/// Rate and cost functions of a concrete model; see the module docs for
/// the calling conventions.
pub trait Dynamics: Send + Sync {
    /// Major-player transition rate `i0 -> j0` (`j0 == i0` is the diagonal).
    fn q0(&self, t: f64, i0: usize, j0: usize, a0: &[f64], x: &[f64]) -> f64;
    /// Minor-player transition rate `i -> j`.
    fn q(&self, t: f64, i: usize, j: usize, a: &[f64], i0: usize, a0: &[f64], x: &[f64]) -> f64;
    /// Major running cost.
    fn f0(&self, t: f64, i0: usize, a0: &[f64], x: &[f64]) -> f64;
    /// Minor running cost.
    fn f(&self, t: f64, i: usize, a: &[f64], i0: usize, a0: &[f64], x: &[f64]) -> f64;
    /// Major terminal cost.
    fn g0(&self, i0: usize, x: &[f64]) -> f64;
    /// Minor terminal cost.
    fn g(&self, i: usize, i0: usize, x: &[f64]) -> f64;
}

/// A complete model: dimensions, horizon, action sets, bounds, and the
/// dynamics plug-in.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    m0: usize,
    m: usize,
    horizon: f64,
    major_actions: ActionSet,
    minor_actions: ActionSet,
    rate_bound: f64,
    extinction_eps: f64,
    alpha0_free: bool,
    params: BTreeMap<String, f64>,
    dynamics: Arc<dyn Dynamics>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("m0", &self.m0)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("rate_bound", &self.rate_bound)
            .field("extinction_eps", &self.extinction_eps)
            .field("alpha0_free", &self.alpha0_free)
            .finish()
    }
}

impl ModelSpec {
    /// Assemble and sanity-check a model.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        m0: usize,
        m: usize,
        horizon: f64,
        major_actions: ActionSet,
        minor_actions: ActionSet,
        rate_bound: f64,
        extinction_eps: f64,
        alpha0_free: bool,
        params: BTreeMap<String, f64>,
        dynamics: Arc<dyn Dynamics>,
    ) -> Result<Self> {
        if m0 < 2 || m < 2 {
            return Err(CoreError::BadParameter {
                key: "states".into(),
                reason: format!("need m0 >= 2 and m >= 2, got m0={m0}, m={m}"),
            });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(CoreError::BadParameter {
                key: "horizon".into(),
                reason: format!("horizon must be positive and finite, got {horizon}"),
            });
        }
        if !(rate_bound > 0.0) || !rate_bound.is_finite() {
            return Err(CoreError::BadParameter {
                key: "rate_bound".into(),
                reason: format!("rate bound must be positive and finite, got {rate_bound}"),
            });
        }
        if !(0.0..1.0).contains(&extinction_eps) {
            return Err(CoreError::BadParameter {
                key: "extinction_eps".into(),
                reason: format!("extinction threshold must lie in [0, 1), got {extinction_eps}"),
            });
        }
        Ok(ModelSpec {
            name: name.into(),
            m0,
            m,
            horizon,
            major_actions,
            minor_actions,
            rate_bound,
            extinction_eps,
            alpha0_free,
            params,
            dynamics,
        })
    }

    /// Model name (builtin name or caller-chosen label).
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Major state count.
    pub fn m0(&self) -> usize {
        self.m0
    }

    /// Minor state count.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Time horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Replace the horizon (used by config-level overrides).
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(CoreError::BadParameter {
                key: "horizon".into(),
                reason: format!("horizon must be positive and finite, got {horizon}"),
            });
        }
        self.horizon = horizon;
        self.params.insert("horizon".into(), horizon);
        Ok(self)
    }

    /// Major action set `A0`.
    pub fn major_actions(&self) -> &ActionSet {
        &self.major_actions
    }

    /// Minor action set `A`.
    pub fn minor_actions(&self) -> &ActionSet {
        &self.minor_actions
    }

    /// Uniform bound `C` on all rate magnitudes.
    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    /// Extinction threshold (0 disables the check).
    pub fn extinction_eps(&self) -> f64 {
        self.extinction_eps
    }

    /// Whether minor rates and costs ignore the major action.
    pub fn alpha0_free(&self) -> bool {
        self.alpha0_free
    }

    /// Resolved parameter values (builtin defaults merged with overrides).
    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Major transition rate.
    pub fn q0(&self, t: f64, i0: usize, j0: usize, a0: &[f64], x: &[f64]) -> f64 {
        self.dynamics.q0(t, i0, j0, a0, x)
    }

    /// Minor transition rate.
    pub fn q(&self, t: f64, i: usize, j: usize, a: &[f64], i0: usize, a0: &[f64], x: &[f64]) -> f64 {
        self.dynamics.q(t, i, j, a, i0, a0, x)
    }

    /// Major running cost.
    pub fn f0(&self, t: f64, i0: usize, a0: &[f64], x: &[f64]) -> f64 {
        self.dynamics.f0(t, i0, a0, x)
    }

    /// Minor running cost.
    pub fn f(&self, t: f64, i: usize, a: &[f64], i0: usize, a0: &[f64], x: &[f64]) -> f64 {
        self.dynamics.f(t, i, a, i0, a0, x)
    }

    /// Major terminal cost.
    pub fn g0(&self, i0: usize, x: &[f64]) -> f64 {
        self.dynamics.g0(i0, x)
    }

    /// Minor terminal cost.
    pub fn g(&self, i: usize, i0: usize, x: &[f64]) -> f64 {
        self.dynamics.g(i, i0, x)
    }

    /// Placeholder action used when evaluating minor rates or costs of
    /// an `alpha0_free` model without a concrete major action.
    pub fn null_major_action(&self) -> &[f64] {
        self.major_actions.point(0)
    }
}

/// How densely [`validate_rates`] samples the domain.
#[derive(Debug, Clone, Copy)]
pub struct SamplePlan {
    /// Points on the uniform time grid (including both endpoints).
    pub n_time: usize,
    /// Measure draws from the seeded uniform-simplex sampler.
    pub n_measure: usize,
    /// Seed of the sampler.
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan { n_time: 5, n_measure: 40, seed: 0 }
    }
}

/// The kind of defect found by validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A Q-matrix row does not sum to zero within tolerance.
    RowSumNonzero,
    /// An off-diagonal rate is negative beyond tolerance.
    NegativeOffDiagonal,
    /// Some `|q|` exceeds the declared `rate_bound`.
    RateBoundExceeded,
    /// A rate out of a near-extinct state is nonzero (Lipschitz guard).
    ExtinctionViolated,
    /// An `alpha0_free` model reads the major action after all.
    Alpha0DependenceDetected,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::RowSumNonzero => "RowSumNonzero",
            ViolationKind::NegativeOffDiagonal => "NegativeOffDiagonal",
            ViolationKind::RateBoundExceeded => "RateBoundExceeded",
            ViolationKind::ExtinctionViolated => "ExtinctionViolated",
            ViolationKind::Alpha0DependenceDetected => "Alpha0DependenceDetected",
        };
        f.write_str(s)
    }
}

/// One validation defect, with enough of a witness to reproduce it.
#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    /// True when the offending rate/cost belongs to the major player.
    pub major: bool,
    pub t: f64,
    /// Row state (`i0` for major rows, `i` for minor rows).
    pub row: usize,
    /// Column state, when a single entry is at fault.
    pub col: Option<usize>,
    /// Major state fixed while evaluating a minor rate.
    pub i0: Option<usize>,
    /// Index into the major action set.
    pub a0_index: Option<usize>,
    /// Index into the minor action set.
    pub a_index: Option<usize>,
    pub x: Vec<f64>,
    /// The offending value (row sum, rate, or cross-action difference).
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} row {}{}) t={:.6}, x={:?}, value={:.6e}",
            self.kind,
            if self.major { "major" } else { "minor" },
            self.row,
            match self.col {
                Some(c) => format!(" -> {c}"),
                None => String::new(),
            },
            self.t,
            self.x,
            self.value,
        )
    }
}

/// Outcome of [`validate_rates`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Number of `(t, x)` sample pairs examined.
    pub samples: usize,
}

impl ValidationReport {
    /// True when no defect was found.
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scaled tolerance for row sums and cross-action equality.
fn row_tol(scale: f64) -> f64 {
    1e-12 * scale.max(1.0)
}

/// Check Q-matrix structure, the rate bound, extinction behavior, and
/// (for `alpha0_free` models) independence from the major action, on a
/// sampled subset of the domain. Findings are reported, not raised.
pub fn validate_rates(model: &ModelSpec, plan: &SamplePlan) -> ValidationReport {
    let mut report = ValidationReport::default();
    let dim = model.m() - 1;
    let t_grid: Vec<f64> = if plan.n_time <= 1 {
        vec![0.0]
    } else {
        (0..plan.n_time)
            .map(|k| model.horizon() * k as f64 / (plan.n_time - 1) as f64)
            .collect()
    };
    let mut rng = substream(plan.seed, "validate-measure", 0);
    let mut measures: Vec<Vec<f64>> = Vec::with_capacity(plan.n_measure);
    for _ in 0..plan.n_measure {
        // uniform Dirichlet via normalized exponentials, embedded coordinates
        let mut gammas: Vec<f64> = (0..model.m()).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = gammas.iter().sum();
        gammas.truncate(dim);
        measures.push(gammas.iter().map(|g| g / total).collect());
    }

    for &t in &t_grid {
        for x in &measures {
            report.samples += 1;
            check_major_rows(model, t, x, &mut report);
            check_minor_rows(model, t, x, &mut report);
            if model.alpha0_free() {
                check_alpha0_independence(model, t, x, &mut report);
            }
            if model.extinction_eps() > 0.0 {
                check_extinction(model, t, x, &mut report);
            }
        }
    }
    report
}

fn check_major_rows(model: &ModelSpec, t: f64, x: &[f64], report: &mut ValidationReport) {
    for i0 in 0..model.m0() {
        for (a0_idx, a0) in model.major_actions().iter() {
            let row: Vec<f64> = (0..model.m0()).map(|j0| model.q0(t, i0, j0, a0, x)).collect();
            classify_row(
                &row, i0, model.rate_bound(),
                |kind, col, value| report.violations.push(Violation {
                    kind, major: true, t, row: i0, col, i0: None,
                    a0_index: Some(a0_idx), a_index: None, x: x.to_vec(), value,
                }),
            );
        }
    }
}

fn check_minor_rows(model: &ModelSpec, t: f64, x: &[f64], report: &mut ValidationReport) {
    for i0 in 0..model.m0() {
        for (a0_idx, a0) in model.major_actions().iter() {
            for i in 0..model.m() {
                for (a_idx, a) in model.minor_actions().iter() {
                    let row: Vec<f64> =
                        (0..model.m()).map(|j| model.q(t, i, j, a, i0, a0, x)).collect();
                    classify_row(
                        &row, i, model.rate_bound(),
                        |kind, col, value| report.violations.push(Violation {
                            kind, major: false, t, row: i, col, i0: Some(i0),
                            a0_index: Some(a0_idx), a_index: Some(a_idx), x: x.to_vec(), value,
                        }),
                    );
                }
            }
        }
    }
}

fn classify_row(row: &[f64], diag: usize, bound: f64, mut push: impl FnMut(ViolationKind, Option<usize>, f64)) {
    let scale = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = row_tol(scale);
    for (j, &v) in row.iter().enumerate() {
        if j != diag && v < -tol {
            push(ViolationKind::NegativeOffDiagonal, Some(j), v);
        }
        if v.abs() > bound * (1.0 + 1e-12) {
            push(ViolationKind::RateBoundExceeded, Some(j), v);
        }
    }
    let sum: f64 = row.iter().sum();
    if sum.abs() > tol {
        push(ViolationKind::RowSumNonzero, None, sum);
    }
}

fn check_alpha0_independence(model: &ModelSpec, t: f64, x: &[f64], report: &mut ValidationReport) {
    let base = model.major_actions().point(0);
    for (a0_idx, a0) in model.major_actions().iter().skip(1) {
        for i0 in 0..model.m0() {
            for i in 0..model.m() {
                for (a_idx, a) in model.minor_actions().iter() {
                    for j in 0..model.m() {
                        let q_ref = model.q(t, i, j, a, i0, base, x);
                        let q_alt = model.q(t, i, j, a, i0, a0, x);
                        let diff = q_alt - q_ref;
                        if diff.abs() > row_tol(q_ref.abs().max(q_alt.abs())) {
                            report.violations.push(Violation {
                                kind: ViolationKind::Alpha0DependenceDetected,
                                major: false, t, row: i, col: Some(j), i0: Some(i0),
                                a0_index: Some(a0_idx), a_index: Some(a_idx),
                                x: x.to_vec(), value: diff,
                            });
                        }
                    }
                    let f_ref = model.f(t, i, a, i0, base, x);
                    let f_alt = model.f(t, i, a, i0, a0, x);
                    let diff = f_alt - f_ref;
                    if diff.abs() > row_tol(f_ref.abs().max(f_alt.abs())) {
                        report.violations.push(Violation {
                            kind: ViolationKind::Alpha0DependenceDetected,
                            major: false, t, row: i, col: None, i0: Some(i0),
                            a0_index: Some(a0_idx), a_index: Some(a_idx),
                            x: x.to_vec(), value: diff,
                        });
                    }
                }
            }
        }
    }
}

fn check_extinction(model: &ModelSpec, t: f64, x: &[f64], report: &mut ValidationReport) {
    let eps = model.extinction_eps();
    let dim = model.m() - 1;
    // near-extinct embedded states: rows 0 .. m-2 must shut down.
    // Scale the sample down first so forcing one coordinate to eps/2
    // cannot push the total mass past 1.
    for i in 0..dim {
        let mut probe: Vec<f64> = x.iter().map(|v| v * (1.0 - eps)).collect();
        probe[i] = 0.5 * eps;
        check_row_shut_down(model, t, &probe, i, dim, report);
    }
    // near-extinct implied state: scale the embedded mass up to 1 - eps/2
    let sum: f64 = x.iter().sum();
    let target = 1.0 - 0.5 * eps;
    let mut probe = x.to_vec();
    if sum > 0.0 {
        for v in probe.iter_mut() {
            *v *= target / sum;
        }
    } else {
        probe[0] = target;
    }
    check_row_shut_down(model, t, &probe, model.m() - 1, dim, report);
}

fn check_row_shut_down(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    row: usize,
    dim: usize,
    report: &mut ValidationReport,
) {
    for i0 in 0..model.m0() {
        for (a0_idx, a0) in model.major_actions().iter() {
            for (a_idx, a) in model.minor_actions().iter() {
                for j in 0..dim {
                    if j == row {
                        continue;
                    }
                    let v = model.q(t, row, j, a, i0, a0, x);
                    if v.abs() > 1e-12 {
                        report.violations.push(Violation {
                            kind: ViolationKind::ExtinctionViolated,
                            major: false, t, row, col: Some(j), i0: Some(i0),
                            a0_index: Some(a0_idx), a_index: Some(a_idx),
                            x: x.to_vec(), value: v,
                        });
                    }
                }
            }
        }
    }
}

/// Empirical sup norms of the four cost functions over time knots,
/// states, actions, and grid points; feeds a-priori value bounds.
#[derive(Debug, Clone, Copy)]
pub struct SupNorms {
    pub f0: f64,
    pub g0: f64,
    pub f: f64,
    pub g: f64,
}

impl SupNorms {
    /// `||g0|| + T ||f0||`: a-priori bound for major-side tables.
    pub fn major_bound(&self, horizon: f64) -> f64 {
        self.g0 + horizon * self.f0
    }

    /// `||g|| + T ||f||`: a-priori bound for minor-side tables.
    pub fn minor_bound(&self, horizon: f64) -> f64 {
        self.g + horizon * self.f
    }
}

/// Scan costs over `n_time` knots and every (state, action, grid point).
pub fn empirical_sup_norms(model: &ModelSpec, grid: &SimplexGrid, n_time: usize) -> SupNorms {
    let mut out = SupNorms { f0: 0.0, g0: 0.0, f: 0.0, g: 0.0 };
    let steps = n_time.max(2);
    for rank in 0..grid.len() {
        let x = grid.point(rank);
        for i0 in 0..model.m0() {
            out.g0 = out.g0.max(model.g0(i0, x).abs());
            for i in 0..model.m() {
                out.g = out.g.max(model.g(i, i0, x).abs());
            }
        }
        for k in 0..steps {
            let t = model.horizon() * k as f64 / (steps - 1) as f64;
            for i0 in 0..model.m0() {
                for (_, a0) in model.major_actions().iter() {
                    out.f0 = out.f0.max(model.f0(t, i0, a0, x).abs());
                    for i in 0..model.m() {
                        for (_, a) in model.minor_actions().iter() {
                            out.f = out.f.max(model.f(t, i, a, i0, a0, x).abs());
                        }
                    }
                }
            }
        }
    }
    out
}
