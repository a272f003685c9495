//! Error type shared by all solver and simulation modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

/// Everything that can go wrong while building models, solving the
/// backward systems, or running simulations.
///
/// Validation findings (negative rates, bad row sums, ...) are *not*
/// errors: they are collected into a [`crate::model::ValidationReport`]
/// so a caller can see every violation at once.
#[derive(Debug, Error)]
pub enum CoreError {
    /// `e_shift(i, j)` with `i == j` or a state index out of range.
    #[error("invalid shift vector request: i={i}, j={j}, m={m}")]
    InvalidShift { i: usize, j: usize, m: usize },

    /// Simplex grid would exceed the configured maximum point count.
    #[error("simplex grid for m={m}, resolution={resolution} has {points} points (max {max})")]
    GridTooLarge {
        m: usize,
        resolution: u32,
        points: u64,
        max: u64,
    },

    /// Interpolation query outside the probability simplex (beyond 1e-9).
    #[error("point lies outside the simplex by {excess:.3e}: {point:?}")]
    OutOfSimplex { point: Vec<f64>, excess: f64 },

    /// `load_builtin` with a name that is not registered.
    #[error("unknown builtin model {name:?} (available: {available})")]
    UnknownModel { name: String, available: String },

    /// Builtin parameter override with an unknown key or a value that
    /// breaks a model precondition.
    #[error("bad parameter {key:?}: {reason}")]
    BadParameter { key: String, reason: String },

    /// Backward integration produced values beyond 10x the a-priori
    /// bound; retry with more time steps.
    #[error(
        "backward integration unstable at t={t:.6}: |value| {magnitude:.3e} exceeds 10x bound \
         {bound:.3e}; retry with >= {suggested_time_steps} time steps"
    )]
    UnstableIntegration {
        t: f64,
        magnitude: f64,
        bound: f64,
        suggested_time_steps: usize,
    },

    /// Product-chain oracle request beyond the hard state cap.
    #[error("product chain has {states} states, above the oracle cap {cap}")]
    OracleTooLarge { states: u64, cap: u64 },

    /// Simulated total exit rate exceeded the thinning envelope, so the
    /// model's `rate_bound` is wrong.
    #[error("total exit rate {rate:.6} exceeds thinning envelope {envelope:.6} at t={t:.6}")]
    RateBoundViolation { t: f64, rate: f64, envelope: f64 },

    /// A shifted grid point fell off the grid after the occupancy guard
    /// said it could not. Reaching this is a bug, never user error.
    #[error("internal index bug: {detail}")]
    IndexBug { detail: String },

    /// Deterministic measure flow left the simplex by more than 1e-6.
    #[error("measure flow left the simplex at t={t:.6} by {excess:.3e}: {point:?}")]
    FlowLeftSimplex { t: f64, point: Vec<f64>, excess: f64 },

    /// Master-system policies do not reproduce from the final value
    /// tables (argmin mismatch beyond tie tolerance).
    #[error(
        "master solution inconsistent: stored policy differs from re-derived argmin at \
         {mismatches} of {indices} indices (first at knot {first_knot}, state {first_state}, \
         grid point {first_rank})"
    )]
    ConsistencyFailure {
        mismatches: usize,
        indices: usize,
        first_knot: usize,
        first_state: usize,
        first_rank: usize,
    },

    /// Minor-role value solves require rates and costs independent of
    /// the major action (`alpha0_free`).
    #[error("{context} requires an alpha0-free model (q and f must not read the major action)")]
    Alpha0FreeRequired { context: String },

    /// Convergence-study population size whose grid would be unusable.
    #[error("infeasible population size N={n}: {reason}")]
    InfeasibleN { n: usize, reason: String },

    /// Artifact serialization failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    /// Helper for io errors tagged with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
