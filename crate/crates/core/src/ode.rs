//! Small ODE integrators shared across modules.
//!
//! The backward table solvers embed their own fused RK4 loop (they need
//! per-stage policy resolution); what lives here is the generic vector
//! machinery: a classic RK4 step for measure flows and a Dormand–Prince
//! 5(4) adaptive driver for the product-chain oracle, where we want the
//! integration error far below every comparison tolerance.

/// One classic RK4 step for `y' = f(t, y)` from `t` with step `h`.
/// `f(t, y, out)` writes the derivative into `out`.
pub fn rk4_step<F: FnMut(f64, &[f64], &mut [f64])>(f: &mut F, t: f64, h: f64, y: &mut Vec<f64>) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    f(t, y, &mut k1);
    for i in 0..n {
        stage[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &stage, &mut k2);
    for i in 0..n {
        stage[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &stage, &mut k3);
    for i in 0..n {
        stage[i] = y[i] + h * k3[i];
    }
    f(t + h, &stage, &mut k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Butcher tableau of Dormand–Prince 5(4).
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// 5th-order weights (same as the last row of `A`).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Embedded 4th-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0` to `t1` with adaptive
/// Dormand–Prince 5(4); returns `y(t1)`.
///
/// Deterministic by construction: step-size control depends only on the
/// trajectory, never on timing or thread count.
pub fn dp54<F: FnMut(f64, &[f64], &mut [f64])>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: Vec<f64>,
    rtol: f64,
    atol: f64,
) -> Vec<f64> {
    let n = y0.len();
    let mut y = y0;
    if n == 0 || t1 == t0 {
        return y;
    }
    let span = t1 - t0;
    let dir = span.signum();
    let mut t = t0;
    let mut h = span / 64.0;
    let h_min = span.abs() * 1e-13;
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];

    f(t, &y, &mut k[0]);
    loop {
        let remaining = t1 - t;
        if remaining.abs() <= span.abs() * 1e-15 {
            return y;
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        for s in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + h * acc;
            }
            f(t + C[s] * h, &stage, &mut k[s + 1]);
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut v5 = 0.0;
            let mut v4 = 0.0;
            for j in 0..7 {
                v5 += B5[j] * k[j][i];
                v4 += B4[j] * k[j][i];
            }
            y5[i] = y[i] + h * v5;
            let scale = atol + rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (v5 - v4)).abs() / scale);
        }
        if err <= 1.0 || h.abs() <= h_min {
            t += h;
            std::mem::swap(&mut y, &mut y5);
            // FSAL: k7 of the accepted step is k1 of the next
            let last = k.pop().expect("seven stages");
            k.insert(0, last);
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        if h.abs() < h_min {
            h = h_min * dir;
        }
    }
}
