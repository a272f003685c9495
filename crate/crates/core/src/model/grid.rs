//! Discrete probability simplexes and interpolation on them.
//!
//! A population of minor players over `m` states is summarized by the
//! first `m - 1` proportions `x_1 .. x_{m-1}`; the last proportion is
//! implied. The continuous domain is
//!
//! ```text
//! P = { x in R^{m-1} : x_i >= 0, sum x_i <= 1 }
//! ```
//!
//! and the grid `P^K` holds the points with coordinates `k_i / K`,
//! `sum k_i <= K`. Points are stored in colexicographic order of the
//! integer tuples (`k_1` varies fastest), and `rank_of` inverts the
//! enumeration in O(m) arithmetic from cumulative binomial counts, so
//! tables indexed by grid rank never need hashing.
//!
//! Interpolation is multilinear over the unit cell containing the
//! query: up to `2^{m-1}` neighbor nodes with product weights. Near the
//! diagonal face some corners leave `P`; their weight is redistributed
//! proportionally over the corners that remain, which keeps the result
//! a convex combination and keeps the scheme exact at the nodes. Inside
//! a cell wholly contained in `P` the rule reproduces affine functions
//! exactly, which is what the convergence analysis of the backward
//! solvers needs.

use crate::error::{CoreError, Result};

/// Hard cap on grid sizes; protects against `C(K + m - 1, m - 1)` blowing up.
pub const MAX_GRID_POINTS: u64 = 5_000_000;

/// Tolerance for accepting a query point as "inside" the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// The shift vector `e_{ij}` in `R^{m-1}`: the displacement of the
/// embedded empirical measure when one player moves from state `i` to
/// state `j` (0-based; the last state `m - 1` has no coordinate).
///
/// Scaled by `1/N` this is the jump of the empirical measure of an
/// `N`-player population.
pub fn e_shift(m: usize, i: usize, j: usize) -> Result<Vec<f64>> {
    if i == j || i >= m || j >= m || m < 2 {
        return Err(CoreError::InvalidShift { i, j, m });
    }
    let mut v = vec![0.0; m - 1];
    if j != m - 1 {
        v[j] += 1.0;
    }
    if i != m - 1 {
        v[i] -= 1.0;
    }
    Ok(v)
}

/// Check that `x` lies in `P` within `tol`; returns the excess otherwise.
pub fn simplex_excess(x: &[f64]) -> f64 {
    let mut excess: f64 = 0.0;
    let mut sum = 0.0;
    for &xi in x {
        excess = excess.max(-xi);
        sum += xi;
    }
    excess.max(sum - 1.0)
}

/// The discrete simplex `P^K`.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    m: usize,
    resolution: u32,
    dim: usize,
    /// `dim` integer coordinates per point, colexicographic order.
    coords: Vec<u32>,
    /// `dim` float coordinates per point (`coords / K`).
    points: Vec<f64>,
    /// `binom[d * (K + 1) + b] = C(b + d, d)` = number of `d`-tuples with sum <= `b`.
    binom: Vec<u64>,
}

impl SimplexGrid {
    /// Build the grid for `m >= 2` minor states at resolution `K >= 1`.
    pub fn new(m: usize, resolution: u32) -> Result<Self> {
        assert!(m >= 2, "need at least two minor states");
        assert!(resolution >= 1, "resolution must be positive");
        let dim = m - 1;
        let binom = binom_table(dim, resolution)
            .ok_or(CoreError::GridTooLarge { m, resolution, points: u64::MAX, max: MAX_GRID_POINTS })?;
        let n_points = binom[dim * (resolution as usize + 1) + resolution as usize];
        if n_points > MAX_GRID_POINTS {
            return Err(CoreError::GridTooLarge { m, resolution, points: n_points, max: MAX_GRID_POINTS });
        }
        let n_points = n_points as usize;
        let mut coords = Vec::with_capacity(n_points * dim);
        let mut current = vec![0u32; dim];
        emit_colex(dim, resolution, &mut current, &mut coords);
        debug_assert_eq!(coords.len(), n_points * dim);
        let points = coords.iter().map(|&k| f64::from(k) / f64::from(resolution)).collect();
        Ok(SimplexGrid { m, resolution, dim, coords, points, binom })
    }

    /// Number of minor states `m`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Grid resolution `K` (players per unit of mass).
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// Embedded dimension `m - 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    /// True when the grid holds no points (cannot happen for valid `m`, `K`).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integer coordinates `(k_1 .. k_{m-1})` of a point.
    pub fn coords_of(&self, rank: usize) -> &[u32] {
        &self.coords[rank * self.dim..(rank + 1) * self.dim]
    }

    /// Float coordinates of a point.
    pub fn point(&self, rank: usize) -> &[f64] {
        &self.points[rank * self.dim..(rank + 1) * self.dim]
    }

    /// Occupancy count of `state` at a grid point (the last state's
    /// count is implied by the budget).
    pub fn count_of(&self, rank: usize, state: usize) -> u32 {
        debug_assert!(state < self.m);
        if state < self.dim {
            self.coords_of(rank)[state]
        } else {
            self.resolution - self.coords_of(rank).iter().sum::<u32>()
        }
    }

    /// `C(b + d, d)`: how many `d`-tuples of nonnegative integers sum to at most `b`.
    fn count(&self, d: usize, b: u32) -> u64 {
        self.binom[d * (self.resolution as usize + 1) + b as usize]
    }

    /// Colexicographic rank of integer coordinates; `None` when the
    /// tuple leaves the budget.
    pub fn rank_of(&self, k: &[u32]) -> Option<usize> {
        debug_assert_eq!(k.len(), self.dim);
        let mut rank = 0u64;
        let mut budget = self.resolution;
        for d in (1..=self.dim).rev() {
            let kd = k[d - 1];
            if kd > budget {
                return None;
            }
            // sum_{v < kd} count(d-1, budget - v), telescoped through the
            // cumulative binomial identity.
            rank += self.count(d, budget) - self.count(d, budget - kd);
            budget -= kd;
        }
        Some(rank as usize)
    }

    /// Rank after moving one player from state `i` to state `j`;
    /// `None` when state `i` is empty at this point.
    pub fn shift_rank(&self, rank: usize, i: usize, j: usize) -> Option<usize> {
        debug_assert!(i != j && i < self.m && j < self.m);
        if self.count_of(rank, i) == 0 {
            return None;
        }
        let mut k: Vec<u32> = self.coords_of(rank).to_vec();
        if i < self.dim {
            k[i] -= 1;
        }
        if j < self.dim {
            k[j] += 1;
        }
        self.rank_of(&k)
    }

    /// Same `(m, K)` layout, hence interchangeable rank spaces.
    pub fn same_layout(&self, other: &SimplexGrid) -> bool {
        self.m == other.m && self.resolution == other.resolution
    }

    /// Neighbor nodes and convex weights for multilinear interpolation
    /// at `x`, renormalized over the corners inside `P`; sorted by rank.
    pub fn cell_weights(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        debug_assert_eq!(x.len(), self.dim);
        let excess = simplex_excess(x);
        if excess > SIMPLEX_TOL {
            return Err(CoreError::OutOfSimplex { point: x.to_vec(), excess });
        }
        let k = f64::from(self.resolution);
        let mut base = vec![0u32; self.dim];
        let mut frac = vec![0.0f64; self.dim];
        for (d, &xi) in x.iter().enumerate() {
            let y = (xi.max(0.0).min(1.0)) * k;
            let mut b = y.floor();
            if b >= k {
                b = k - 1.0;
            }
            base[d] = b as u32;
            frac[d] = y - b;
        }
        let mut corners: Vec<(usize, f64)> = Vec::with_capacity(1 << self.dim);
        let mut corner = vec![0u32; self.dim];
        let mut total = 0.0;
        for mask in 0u32..(1 << self.dim) {
            let mut w = 1.0;
            for d in 0..self.dim {
                if mask & (1 << d) != 0 {
                    w *= frac[d];
                    corner[d] = base[d] + 1;
                } else {
                    w *= 1.0 - frac[d];
                    corner[d] = base[d];
                }
            }
            if w == 0.0 {
                continue;
            }
            if let Some(rank) = self.rank_of(&corner) {
                corners.push((rank, w));
                total += w;
            }
        }
        debug_assert!(total > 0.0, "no corner of the enclosing cell lies in P");
        for item in corners.iter_mut() {
            item.1 /= total;
        }
        corners.sort_unstable_by_key(|&(rank, _)| rank);
        Ok(corners)
    }

    /// The grid node nearest to `x` in interpolation weight; ties break
    /// to the lowest rank.
    pub fn nearest_rank(&self, x: &[f64]) -> Result<usize> {
        let weights = self.cell_weights(x)?;
        let mut best = weights[0];
        for &(rank, w) in &weights[1..] {
            if w > best.1 {
                best = (rank, w);
            }
        }
        Ok(best.0)
    }
}

/// Multilinear interpolation of `table` (one value per grid point) at `x`.
pub fn interpolate(grid: &SimplexGrid, table: &[f64], x: &[f64]) -> Result<f64> {
    debug_assert_eq!(table.len(), grid.len());
    let weights = grid.cell_weights(x)?;
    Ok(weights.iter().map(|&(rank, w)| w * table[rank]).sum())
}

/// Cumulative binomial table up to dimension `dim` and budget `k`;
/// `None` on u64 overflow (the grid would be absurdly large anyway).
fn binom_table(dim: usize, k: u32) -> Option<Vec<u64>> {
    let cols = k as usize + 1;
    let mut t = vec![0u64; (dim + 1) * cols];
    for b in 0..cols {
        t[b] = 1; // d = 0: only the empty tuple
    }
    for d in 1..=dim {
        let mut acc: u64 = 0;
        for b in 0..cols {
            // count(d, b) = sum_{v <= b} count(d-1, v)
            acc = acc.checked_add(t[(d - 1) * cols + b])?;
            t[d * cols + b] = acc;
        }
    }
    Some(t)
}

/// Emit all tuples with sum <= `budget` in colexicographic order
/// (first coordinate fastest).
fn emit_colex(d: usize, budget: u32, current: &mut [u32], out: &mut Vec<u32>) {
    if d == 0 {
        out.extend_from_slice(current);
        return;
    }
    for v in 0..=budget {
        current[d - 1] = v;
        emit_colex(d - 1, budget - v, current, out);
    }
    current[d - 1] = 0;
}
