//! Solvers and simulators for continuous-time finite-state mean field
//! games between one major player and a crowd of minor players.
//!
//! The crate covers the full pipeline:
//!
//! * [`model`] — model plug-in interface, action sets, simplex grids,
//!   rate validation, builtin examples;
//! * [`nplayer`] — exact finite-population machinery: generators,
//!   backward cost/value ODEs, event-driven simulation, and a
//!   product-chain oracle;
//! * [`meanfield`] — the limiting dynamics: measure flows, piecewise
//!   deterministic simulation, Monte Carlo costs;
//! * [`hjb`] — limiting value functions and the master system on a
//!   simplex grid;
//! * [`equilibrium`] — best responses, damped fixed-point iteration,
//!   exploitability;
//! * [`chaos`] — finite-population-to-mean-field convergence studies.
//!
//! States are indexed from zero; the embedded measure `x` carries the
//! first `m - 1` minor proportions and the last one is implied.

pub mod chaos;
pub mod equilibrium;
mod error;
pub mod hjb;
pub mod meanfield;
pub mod model;
pub mod nplayer;
mod ode;
pub mod output;
pub mod quad;
pub mod rng;
mod table;

pub use error::{CoreError, Result};
pub use table::{
    nearest_knot, uniform_time_grid, ConstantPolicy, FeedbackPolicy, MajorFn, MajorPolicy,
    MinorFn, MinorPolicy, Role, ValueTable,
};
