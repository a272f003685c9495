//! Builtin example models.
//!
//! * `two_two` — two major regimes, two minor states, binary effort on
//!   both sides. Rates couple to the minor distribution, so the mean
//!   field matters; costs penalize effort, crowding, and misalignment
//!   with the major state. The workhorse for tests and studies.
//! * `cyber4` — four minor states (defended/undefended x
//!   susceptible/infected) under a two-regime attacker who controls
//!   escalation. Exercises `m > 2` code paths.
//! * `decoupled` — rates and costs ignore the measure and the other
//!   player class entirely, so each side reduces to a plain
//!   finite-state control problem with known reference solutions.
//!
//! Every numeric constant can be overridden by name through
//! [`load_builtin`]; unknown keys are rejected.

use super::{ActionSet, Dynamics, ModelSpec};
use crate::error::{CoreError, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Builtin registry names.
pub const BUILTIN_NAMES: [&str; 3] = ["two_two", "cyber4", "decoupled"];

/// Instantiate a builtin by name with parameter overrides.
pub fn load_builtin(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    match name {
        "two_two" => two_two(overrides),
        "cyber4" => cyber4(overrides),
        "decoupled" => decoupled(overrides),
        other => Err(CoreError::UnknownModel {
            name: other.to_string(),
            available: BUILTIN_NAMES.join(", "),
        }),
    }
}

/// Merge overrides into defaults; reject unknown keys and non-finite values.
fn resolve(
    model: &str,
    defaults: &[(&str, f64)],
    overrides: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let mut params: BTreeMap<String, f64> =
        defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (key, value) in overrides {
        if !params.contains_key(key) {
            return Err(CoreError::BadParameter {
                key: key.clone(),
                reason: format!(
                    "unknown parameter for builtin {model}; known: {}",
                    defaults.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
                ),
            });
        }
        if !value.is_finite() {
            return Err(CoreError::BadParameter {
                key: key.clone(),
                reason: format!("value must be finite, got {value}"),
            });
        }
        params.insert(key.clone(), *value);
    }
    Ok(params)
}

fn require_nonneg(params: &BTreeMap<String, f64>, keys: &[&str]) -> Result<()> {
    for key in keys {
        let v = params[*key];
        if v < 0.0 {
            return Err(CoreError::BadParameter {
                key: (*key).to_string(),
                reason: format!("rate coefficient must be nonnegative, got {v}"),
            });
        }
    }
    Ok(())
}

fn binary_actions() -> ActionSet {
    ActionSet::scalar(&[0.0, 1.0]).expect("static action set")
}

// ---------------------------------------------------------------------------
// two_two
// ---------------------------------------------------------------------------

struct TwoTwo {
    r01: f64,
    s01: f64,
    w01: f64,
    r10: f64,
    s10: f64,
    w10: f64,
    m01: f64,
    n01: f64,
    c01: f64,
    d01: f64,
    m10: f64,
    n10: f64,
    c10: f64,
    d10: f64,
    e0: f64,
    k0: f64,
    tau0: f64,
    tau1: f64,
    e: f64,
    crowd: f64,
    align: f64,
    gterm0: f64,
    gterm: f64,
}

impl TwoTwo {
    fn up0(&self, a0: f64, x0: f64) -> f64 {
        self.r01 + self.s01 * a0 + self.w01 * x0
    }
    fn down0(&self, a0: f64, x0: f64) -> f64 {
        self.r10 + self.s10 * a0 + self.w10 * (1.0 - x0)
    }
    fn up(&self, a: f64, i0: usize, x0: f64) -> f64 {
        self.m01 + self.n01 * a + self.c01 * (i0 == 1) as u8 as f64 + self.d01 * x0
    }
    fn down(&self, a: f64, i0: usize, x0: f64) -> f64 {
        self.m10 + self.n10 * (1.0 - a) + self.c10 * (i0 == 0) as u8 as f64 + self.d10 * (1.0 - x0)
    }
}

impl Dynamics for TwoTwo {
    fn q0(&self, _t: f64, i0: usize, j0: usize, a0: &[f64], x: &[f64]) -> f64 {
        let rate = if i0 == 0 { self.up0(a0[0], x[0]) } else { self.down0(a0[0], x[0]) };
        if i0 == j0 {
            -rate
        } else {
            rate
        }
    }

    fn q(&self, _t: f64, i: usize, j: usize, a: &[f64], i0: usize, _a0: &[f64], x: &[f64]) -> f64 {
        let rate = if i == 0 { self.up(a[0], i0, x[0]) } else { self.down(a[0], i0, x[0]) };
        if i == j {
            -rate
        } else {
            rate
        }
    }

    fn f0(&self, _t: f64, i0: usize, a0: &[f64], x: &[f64]) -> f64 {
        let target = if i0 == 0 { self.tau0 } else { self.tau1 };
        self.e0 * a0[0] + self.k0 * (x[0] - target) * (x[0] - target)
    }

    fn f(&self, _t: f64, i: usize, a: &[f64], i0: usize, _a0: &[f64], x: &[f64]) -> f64 {
        let own_mass = if i == 0 { x[0] } else { 1.0 - x[0] };
        self.e * a[0] + self.crowd * own_mass + self.align * (i != i0) as u8 as f64
    }

    fn g0(&self, i0: usize, _x: &[f64]) -> f64 {
        self.gterm0 * (i0 == 1) as u8 as f64
    }

    fn g(&self, i: usize, _i0: usize, _x: &[f64]) -> f64 {
        self.gterm * (i == 1) as u8 as f64
    }
}

fn two_two(overrides: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let defaults: &[(&str, f64)] = &[
        ("horizon", 1.0),
        // major rates: 0->1 grows with escalation effort and the mass on
        // minor state 0; 1->0 with effort and the complementary mass
        ("major_up_base", 0.4),
        ("major_up_gain", 0.6),
        ("major_up_mass", 0.2),
        ("major_down_base", 0.5),
        ("major_down_gain", 0.3),
        ("major_down_mass", 0.2),
        // minor rates: effort pushes 0->1 and holds back 1->0; the major
        // regime and crowding tilt both directions
        ("minor_up_base", 0.3),
        ("minor_up_gain", 0.5),
        ("minor_up_regime", 0.3),
        ("minor_up_mass", 0.2),
        ("minor_down_base", 0.35),
        ("minor_down_gain", 0.45),
        ("minor_down_regime", 0.25),
        ("minor_down_mass", 0.2),
        // costs
        ("major_effort_cost", 0.3),
        ("major_tracking_weight", 1.2),
        ("major_target_low", 0.25),
        ("major_target_high", 0.75),
        ("minor_effort_cost", 0.25),
        ("minor_crowd_cost", 0.4),
        ("minor_align_cost", 0.4),
        ("major_terminal", 0.0),
        ("minor_terminal", 0.0),
    ];
    let params = resolve("two_two", defaults, overrides)?;
    require_nonneg(
        &params,
        &[
            "major_up_base", "major_up_gain", "major_up_mass",
            "major_down_base", "major_down_gain", "major_down_mass",
            "minor_up_base", "minor_up_gain", "minor_up_regime", "minor_up_mass",
            "minor_down_base", "minor_down_gain", "minor_down_regime", "minor_down_mass",
        ],
    )?;
    let dynamics = TwoTwo {
        r01: params["major_up_base"],
        s01: params["major_up_gain"],
        w01: params["major_up_mass"],
        r10: params["major_down_base"],
        s10: params["major_down_gain"],
        w10: params["major_down_mass"],
        m01: params["minor_up_base"],
        n01: params["minor_up_gain"],
        c01: params["minor_up_regime"],
        d01: params["minor_up_mass"],
        m10: params["minor_down_base"],
        n10: params["minor_down_gain"],
        c10: params["minor_down_regime"],
        d10: params["minor_down_mass"],
        e0: params["major_effort_cost"],
        k0: params["major_tracking_weight"],
        tau0: params["major_target_low"],
        tau1: params["major_target_high"],
        e: params["minor_effort_cost"],
        crowd: params["minor_crowd_cost"],
        align: params["minor_align_cost"],
        gterm0: params["major_terminal"],
        gterm: params["minor_terminal"],
    };
    let rate_bound = (dynamics.r01 + dynamics.s01 + dynamics.w01)
        .max(dynamics.r10 + dynamics.s10 + dynamics.w10)
        .max(dynamics.m01 + dynamics.n01 + dynamics.c01 + dynamics.d01)
        .max(dynamics.m10 + dynamics.n10 + dynamics.c10 + dynamics.d10);
    ModelSpec::new(
        "two_two",
        2,
        2,
        params["horizon"],
        binary_actions(),
        binary_actions(),
        rate_bound,
        0.0,
        true,
        params,
        Arc::new(dynamics),
    )
}

// ---------------------------------------------------------------------------
// cyber4
// ---------------------------------------------------------------------------

/// States: 0 = defended-susceptible, 1 = defended-infected,
/// 2 = undefended-susceptible, 3 = undefended-infected.
struct Cyber4 {
    beta_defended: f64,
    beta_undefended: f64,
    attack_boost: f64,
    recover_defended: f64,
    recover_undefended: f64,
    adopt_base: f64,
    adopt_gain: f64,
    decay: f64,
    esc_base: f64,
    esc_gain: f64,
    deesc_base: f64,
    deesc_calm: f64,
    infection_cost: f64,
    defense_cost: f64,
    attack_cost: f64,
    attack_upkeep: f64,
    damage_weight: f64,
}

impl Cyber4 {
    /// Infected mass: state 1 plus the implied state 3.
    fn infected(x: &[f64]) -> f64 {
        (x[1] + (1.0 - x[0] - x[1] - x[2])).max(0.0)
    }

    fn rate(&self, i: usize, j: usize, a: f64, i0: usize, x: &[f64]) -> f64 {
        let pressure = 1.0 + self.attack_boost * (i0 == 1) as u8 as f64;
        let iota = Self::infected(x);
        match (i, j) {
            (0, 1) => self.beta_defended * pressure * iota,
            (1, 0) => self.recover_defended,
            (2, 3) => self.beta_undefended * pressure * iota,
            (3, 2) => self.recover_undefended,
            (2, 0) | (3, 1) => self.adopt_base + self.adopt_gain * a,
            (0, 2) | (1, 3) => self.decay,
            _ => 0.0,
        }
    }
}

impl Dynamics for Cyber4 {
    fn q0(&self, _t: f64, i0: usize, j0: usize, a0: &[f64], x: &[f64]) -> f64 {
        let rate = if i0 == 0 {
            self.esc_base + self.esc_gain * a0[0]
        } else {
            self.deesc_base + self.deesc_calm * (1.0 - Self::infected(x))
        };
        if i0 == j0 {
            -rate
        } else {
            rate
        }
    }

    fn q(&self, _t: f64, i: usize, j: usize, a: &[f64], i0: usize, _a0: &[f64], x: &[f64]) -> f64 {
        if i == j {
            -(0..4).filter(|&k| k != i).map(|k| self.rate(i, k, a[0], i0, x)).sum::<f64>()
        } else {
            self.rate(i, j, a[0], i0, x)
        }
    }

    fn f0(&self, _t: f64, i0: usize, a0: &[f64], x: &[f64]) -> f64 {
        // the attacker gains from infections, pays for effort and upkeep
        -self.damage_weight * Self::infected(x)
            + self.attack_cost * a0[0]
            + self.attack_upkeep * (i0 == 1) as u8 as f64
    }

    fn f(&self, _t: f64, i: usize, a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
        self.infection_cost * (i == 1 || i == 3) as u8 as f64 + self.defense_cost * a[0]
    }

    fn g0(&self, _i0: usize, _x: &[f64]) -> f64 {
        0.0
    }

    fn g(&self, _i: usize, _i0: usize, _x: &[f64]) -> f64 {
        0.0
    }
}

fn cyber4(overrides: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let defaults: &[(&str, f64)] = &[
        ("horizon", 1.0),
        ("beta_defended", 0.3),
        ("beta_undefended", 1.0),
        ("attack_boost", 1.0),
        ("recover_defended", 0.6),
        ("recover_undefended", 0.3),
        ("adopt_base", 0.05),
        ("adopt_gain", 0.8),
        ("decay", 0.1),
        ("esc_base", 0.2),
        ("esc_gain", 0.8),
        ("deesc_base", 0.3),
        ("deesc_calm", 0.3),
        ("infection_cost", 1.0),
        ("defense_cost", 0.3),
        ("attack_cost", 0.4),
        ("attack_upkeep", 0.2),
        ("damage_weight", 1.0),
    ];
    let params = resolve("cyber4", defaults, overrides)?;
    require_nonneg(
        &params,
        &[
            "beta_defended", "beta_undefended", "attack_boost",
            "recover_defended", "recover_undefended",
            "adopt_base", "adopt_gain", "decay",
            "esc_base", "esc_gain", "deesc_base", "deesc_calm",
        ],
    )?;
    let dynamics = Cyber4 {
        beta_defended: params["beta_defended"],
        beta_undefended: params["beta_undefended"],
        attack_boost: params["attack_boost"],
        recover_defended: params["recover_defended"],
        recover_undefended: params["recover_undefended"],
        adopt_base: params["adopt_base"],
        adopt_gain: params["adopt_gain"],
        decay: params["decay"],
        esc_base: params["esc_base"],
        esc_gain: params["esc_gain"],
        deesc_base: params["deesc_base"],
        deesc_calm: params["deesc_calm"],
        infection_cost: params["infection_cost"],
        defense_cost: params["defense_cost"],
        attack_cost: params["attack_cost"],
        attack_upkeep: params["attack_upkeep"],
        damage_weight: params["damage_weight"],
    };
    // worst-case exit rates row by row (iota <= 1)
    let pressure = 1.0 + dynamics.attack_boost;
    let adopt = dynamics.adopt_base + dynamics.adopt_gain;
    let rate_bound = (dynamics.beta_defended * pressure + dynamics.decay)
        .max(dynamics.recover_defended + dynamics.decay)
        .max(dynamics.beta_undefended * pressure + adopt)
        .max(dynamics.recover_undefended + adopt)
        .max(dynamics.esc_base + dynamics.esc_gain)
        .max(dynamics.deesc_base + dynamics.deesc_calm);
    ModelSpec::new(
        "cyber4",
        2,
        4,
        params["horizon"],
        binary_actions(),
        binary_actions(),
        rate_bound,
        0.0,
        true,
        params,
        Arc::new(dynamics),
    )
}

// ---------------------------------------------------------------------------
// decoupled
// ---------------------------------------------------------------------------

struct Decoupled {
    q0_up_base: f64,
    q0_up_gain: f64,
    q0_down: f64,
    f0_effort: f64,
    f0_state: f64,
    g0_state: f64,
    q_up_base: f64,
    q_up_gain: f64,
    q_down: f64,
    f_effort: f64,
    f_state: f64,
    g_state: f64,
}

impl Dynamics for Decoupled {
    fn q0(&self, _t: f64, i0: usize, j0: usize, a0: &[f64], _x: &[f64]) -> f64 {
        let rate = if i0 == 0 { self.q0_up_base + self.q0_up_gain * a0[0] } else { self.q0_down };
        if i0 == j0 {
            -rate
        } else {
            rate
        }
    }

    fn q(&self, _t: f64, i: usize, j: usize, a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
        let rate = if i == 0 { self.q_up_base + self.q_up_gain * a[0] } else { self.q_down };
        if i == j {
            -rate
        } else {
            rate
        }
    }

    fn f0(&self, _t: f64, i0: usize, a0: &[f64], _x: &[f64]) -> f64 {
        self.f0_effort * a0[0] + self.f0_state * (i0 == 1) as u8 as f64
    }

    fn f(&self, _t: f64, i: usize, a: &[f64], _i0: usize, _a0: &[f64], _x: &[f64]) -> f64 {
        self.f_effort * a[0] + self.f_state * (i == 1) as u8 as f64
    }

    fn g0(&self, i0: usize, _x: &[f64]) -> f64 {
        self.g0_state * (i0 == 1) as u8 as f64
    }

    fn g(&self, i: usize, _i0: usize, _x: &[f64]) -> f64 {
        self.g_state * (i == 1) as u8 as f64
    }
}

fn decoupled(overrides: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let defaults: &[(&str, f64)] = &[
        ("horizon", 1.0),
        ("major_up_base", 0.5),
        ("major_up_gain", 0.5),
        ("major_down", 0.8),
        ("major_effort_cost", 0.4),
        ("major_state_cost", 1.0),
        ("major_terminal", 0.5),
        ("minor_up_base", 0.4),
        ("minor_up_gain", 0.6),
        ("minor_down", 0.7),
        ("minor_effort_cost", 0.3),
        ("minor_state_cost", 0.8),
        ("minor_terminal", 0.4),
    ];
    let params = resolve("decoupled", defaults, overrides)?;
    require_nonneg(
        &params,
        &["major_up_base", "major_up_gain", "major_down", "minor_up_base", "minor_up_gain", "minor_down"],
    )?;
    let dynamics = Decoupled {
        q0_up_base: params["major_up_base"],
        q0_up_gain: params["major_up_gain"],
        q0_down: params["major_down"],
        f0_effort: params["major_effort_cost"],
        f0_state: params["major_state_cost"],
        g0_state: params["major_terminal"],
        q_up_base: params["minor_up_base"],
        q_up_gain: params["minor_up_gain"],
        q_down: params["minor_down"],
        f_effort: params["minor_effort_cost"],
        f_state: params["minor_state_cost"],
        g_state: params["minor_terminal"],
    };
    let rate_bound = (dynamics.q0_up_base + dynamics.q0_up_gain)
        .max(dynamics.q0_down)
        .max(dynamics.q_up_base + dynamics.q_up_gain)
        .max(dynamics.q_down);
    ModelSpec::new(
        "decoupled",
        2,
        2,
        params["horizon"],
        binary_actions(),
        binary_actions(),
        rate_bound,
        0.0,
        true,
        params,
        Arc::new(dynamics),
    )
}
