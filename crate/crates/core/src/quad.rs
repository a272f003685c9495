//! Gauss–Legendre quadrature used for running-cost integrals.
//!
//! Five nodes integrate polynomials up to degree nine exactly, which is
//! far beyond the smoothness of any cost function we meet; the rule is
//! applied per inter-event interval (jump processes) or per flow step
//! (measure flows), so the global error is driven by the integrand's
//! variation inside one interval only.

/// Nodes of the 5-point Gauss–Legendre rule on [-1, 1].
const NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];

/// Weights matching [`NODES`].
const WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Integral of `f` over `[a, b]` by a single 5-point rule.
pub fn gauss5<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (node, weight) in NODES.iter().zip(WEIGHTS.iter()) {
        acc += weight * f(mid + half * node);
    }
    half * acc
}

/// The nodes of the rule mapped into `[a, b]`, in ascending order,
/// paired with their weights scaled by the interval half-length.
pub fn gauss5_nodes(a: f64, b: f64) -> [(f64, f64); 5] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out = [(0.0, 0.0); 5];
    for (k, (node, weight)) in NODES.iter().zip(WEIGHTS.iter()).enumerate() {
        out[k] = (mid + half * node, half * weight);
    }
    out
}
