//! Hill-type muscle: first-order activation dynamics and the
//! force-length-velocity tension law.

use super::model::{MuscleParams, NUM_JOINTS};
use crate::error::{Error, Result};

/// Contraction velocity (m/s) that normalizes fiber velocity.
pub const VELOCITY_SCALE: f64 = 2.5;

/// Rate of change of activation for excitation `u` and activation `a`.
///
/// Rises with an excitation-dependent rate when `u >= a`, decays with the
/// deactivation constant otherwise. Both branches vanish at `u == a`.
pub fn activation_derivative(u: f64, a: f64, params: &MuscleParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u), "excitation {u} outside [0, 1]");
    debug_assert!(
        (-1e-12..=1.0 + 1e-12).contains(&a),
        "activation {a} outside [0, 1]"
    );
    if u >= a {
        (u - a) * (u / params.tau_act + (1.0 - u) / params.tau_deact)
    } else {
        (u - a) / params.tau_deact
    }
}

/// Active force-length factor at normalized length `l`.
pub fn force_length(l: f64) -> f64 {
    let x = l - 0.95;
    (-40.0 * x.powi(4) + x * x).exp()
}

/// Force-velocity factor at normalized velocity `v` (positive lengthening).
pub fn force_velocity(v: f64) -> Result<f64> {
    if !(v < 1.0) {
        return Err(Error::VelocityDomain { velocity: v });
    }
    let s = 1.0 - v;
    Ok(1.6 - 1.6 * (-1.1 / s.powi(4) + 0.1 / (s * s)).exp())
}

/// Passive elastic factor at normalized length `l`.
pub fn passive_force(l: f64) -> f64 {
    1.3 * (0.1 * (l - 0.22).powi(10)).atan()
}

/// Fiber tension (N) for activation `a`, fiber length (m) and fiber
/// velocity (m/s, positive when lengthening).
pub fn muscle_force(
    a: f64,
    fiber_length: f64,
    fiber_velocity: f64,
    params: &MuscleParams,
) -> Result<f64> {
    if !(fiber_length > 0.0) {
        return Err(Error::NonPositiveFiberLength {
            length: fiber_length,
        });
    }
    let l = fiber_length / params.optimal_fiber_length;
    let v = fiber_velocity / VELOCITY_SCALE;
    let f2 = force_velocity(v)?;
    Ok(params.max_isometric_force * (force_length(l) * f2 * a + passive_force(l)))
}

/// Fiber length and velocity from joint angles and rates under the
/// constant-moment-arm path: the fiber shortens by `r_j` per radian of
/// joint `j`.
pub fn muscle_geometry(
    q: &[f64; NUM_JOINTS],
    qdot: &[f64; NUM_JOINTS],
    params: &MuscleParams,
) -> Result<(f64, f64)> {
    let r = &params.moment_arms;
    let length = params.rest_length - (r[0] * q[0] + r[1] * q[1]);
    let velocity = -(r[0] * qdot[0] + r[1] * qdot[1]);
    if !(length > 0.0) {
        return Err(Error::NonPositiveFiberLength { length });
    }
    Ok((length, velocity))
}
