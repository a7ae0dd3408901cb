//! Rigid-body dynamics of the two-link arm and fixed-step integration of
//! the coupled activation / joint ODE.

use serde::{Deserialize, Serialize};

use super::model::{ArmModel, NUM_JOINTS, NUM_MUSCLES};
use super::muscle::{activation_derivative, muscle_force, muscle_geometry};
use crate::error::{Error, Result};
use crate::vec2::Vec2;

pub type Joint = [f64; NUM_JOINTS];
pub type PerMuscle = [f64; NUM_MUSCLES];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub q: Joint,
    pub qdot: Joint,
    pub activations: PerMuscle,
    pub time: f64,
}

impl ArmState {
    /// At rest at posture `q` with all muscles inactive.
    pub fn at_rest(q: Joint) -> Self {
        ArmState {
            q,
            qdot: [0.0; NUM_JOINTS],
            activations: [0.0; NUM_MUSCLES],
            time: 0.0,
        }
    }
}

/// Per-muscle excitation sampled on a fixed grid. Sample `k` drives the
/// integration step from `k * dt` to `(k + 1) * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationProfile {
    pub dt: f64,
    pub samples: Vec<PerMuscle>,
}

impl ExcitationProfile {
    pub fn new(dt: f64, samples: Vec<PerMuscle>) -> Result<Self> {
        let profile = ExcitationProfile { dt, samples };
        profile.validate()?;
        Ok(profile)
    }

    pub fn zeros(model: &ArmModel) -> Self {
        ExcitationProfile {
            dt: model.integrator.dt,
            samples: vec![[0.0; NUM_MUSCLES]; model.integrator.steps()],
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::GridMismatch(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        for (k, sample) in self.samples.iter().enumerate() {
            if let Some(u) = sample.iter().find(|u| !(0.0..=1.0).contains(*u)) {
                return Err(Error::GridMismatch(format!(
                    "sample {k} has excitation {u} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Fails unless the grid matches the model's step and duration.
    pub fn check_grid(&self, model: &ArmModel) -> Result<()> {
        let integ = &model.integrator;
        if (self.dt - integ.dt).abs() > 1e-15 * integ.dt.max(1.0)
            || self.samples.len() != integ.steps()
        {
            return Err(Error::GridMismatch(format!(
                "profile has dt {} x {} samples, model expects dt {} x {}",
                self.dt,
                self.samples.len(),
                integ.dt,
                integ.steps()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<ArmState>,
    pub hand_positions: Vec<Vec2>,
    pub final_position: Vec2,
}

/// Hand position with the shoulder at the origin.
pub fn forward_kinematics(q: &Joint, model: &ArmModel) -> Vec2 {
    let [l1, l2] = model.links.lengths;
    let q12 = q[0] + q[1];
    Vec2::new(
        l1 * q[0].cos() + l2 * q12.cos(),
        l1 * q[0].sin() + l2 * q12.sin(),
    )
}

/// Joint-space mass matrix A(q).
pub fn mass_matrix(q: &Joint, model: &ArmModel) -> [[f64; 2]; 2] {
    let p = &model.links;
    let [m1, m2] = p.masses;
    let [c1, c2] = p.com_offsets;
    let [i1, i2] = p.inertias;
    let l1 = p.lengths[0];
    let cos2 = q[1].cos();
    let a22 = i2 + m2 * c2 * c2;
    let a12 = a22 + m2 * l1 * c2 * cos2;
    let a11 = i1 + m1 * c1 * c1 + m2 * (l1 * l1 + 2.0 * l1 * c2 * cos2) + a22;
    [[a11, a12], [a12, a22]]
}

/// Generalized environment force G(q, qdot): gravity plus the
/// centrifugal / Coriolis terms, with the sign of an applied torque.
pub fn environment_forces(q: &Joint, qdot: &Joint, model: &ArmModel) -> Joint {
    let p = &model.links;
    let [m1, m2] = p.masses;
    let [c1, c2] = p.com_offsets;
    let l1 = p.lengths[0];
    let g = model.gravity;
    let h = m2 * l1 * c2 * q[1].sin();
    let coriolis = [
        -h * (2.0 * qdot[0] * qdot[1] + qdot[1] * qdot[1]),
        h * qdot[0] * qdot[0],
    ];
    let cos12 = (q[0] + q[1]).cos();
    let gravity = [
        (m1 * c1 + m2 * l1) * g * q[0].cos() + m2 * c2 * g * cos12,
        m2 * c2 * g * cos12,
    ];
    [-coriolis[0] - gravity[0], -coriolis[1] - gravity[1]]
}

/// Muscle tensions (N) in the fixed muscle order.
pub fn muscle_forces(state: &ArmState, model: &ArmModel) -> Result<PerMuscle> {
    let mut forces = [0.0; NUM_MUSCLES];
    for (m, params) in model.muscles.iter().enumerate() {
        let (length, velocity) = muscle_geometry(&state.q, &state.qdot, params)?;
        forces[m] = muscle_force(state.activations[m], length, velocity, params)?;
    }
    Ok(forces)
}

/// Joint accelerations and activation rates for the current state and
/// excitation.
pub fn dynamics_rhs(
    state: &ArmState,
    u: &PerMuscle,
    model: &ArmModel,
) -> Result<(Joint, PerMuscle)> {
    let forces = muscle_forces(state, model)?;
    let mut torque = environment_forces(&state.q, &state.qdot, model);
    for (m, muscle) in model.muscles.iter().enumerate() {
        for (j, t) in torque.iter_mut().enumerate() {
            *t += muscle.moment_arms[j] * forces[m];
        }
    }
    for (j, t) in torque.iter_mut().enumerate() {
        *t -= model.links.damping[j] * state.qdot[j];
    }

    let [[a11, a12], [_, a22]] = mass_matrix(&state.q, model);
    let det = a11 * a22 - a12 * a12;
    assert!(
        det > 0.0,
        "mass matrix must be positive definite (det = {det})"
    );
    let qddot = [
        (a22 * torque[0] - a12 * torque[1]) / det,
        (a11 * torque[1] - a12 * torque[0]) / det,
    ];

    let mut adot = [0.0; NUM_MUSCLES];
    for (m, params) in model.muscles.iter().enumerate() {
        adot[m] = activation_derivative(u[m], state.activations[m], params);
    }
    Ok((qddot, adot))
}

const DIM: usize = 2 * NUM_JOINTS + NUM_MUSCLES;

fn pack(state: &ArmState) -> [f64; DIM] {
    let mut y = [0.0; DIM];
    y[0..2].copy_from_slice(&state.q);
    y[2..4].copy_from_slice(&state.qdot);
    y[4..].copy_from_slice(&state.activations);
    y
}

fn unpack(y: &[f64; DIM], time: f64) -> ArmState {
    let mut state = ArmState::at_rest([y[0], y[1]]);
    state.qdot = [y[2], y[3]];
    for (a, v) in state.activations.iter_mut().zip(&y[4..]) {
        // Intermediate Runge-Kutta stages can leave the invariant region.
        *a = v.clamp(0.0, 1.0);
    }
    state.time = time;
    state
}

fn derivative(y: &[f64; DIM], time: f64, u: &PerMuscle, model: &ArmModel) -> Result<[f64; DIM]> {
    let state = unpack(y, time);
    let (qddot, adot) = dynamics_rhs(&state, u, model)?;
    let mut dy = [0.0; DIM];
    dy[0..2].copy_from_slice(&state.qdot);
    dy[2..4].copy_from_slice(&qddot);
    dy[4..].copy_from_slice(&adot);
    Ok(dy)
}

/// One classical fourth-order Runge-Kutta step of length `model.integrator.dt`
/// with the excitation held at `u`.
pub fn step(state: &ArmState, u: &PerMuscle, model: &ArmModel) -> Result<ArmState> {
    step_with_dt(state, u, model, model.integrator.dt)
}

fn step_with_dt(state: &ArmState, u: &PerMuscle, model: &ArmModel, dt: f64) -> Result<ArmState> {
    debug_assert!(u.iter().all(|u| (0.0..=1.0).contains(u)));
    let t = state.time;
    let y0 = pack(state);
    let axpy = |h: f64, k: &[f64; DIM]| {
        let mut y = y0;
        for (yi, ki) in y.iter_mut().zip(k) {
            *yi += h * ki;
        }
        y
    };
    let k1 = derivative(&y0, t, u, model)?;
    let k2 = derivative(&axpy(0.5 * dt, &k1), t + 0.5 * dt, u, model)?;
    let k3 = derivative(&axpy(0.5 * dt, &k2), t + 0.5 * dt, u, model)?;
    let k4 = derivative(&axpy(dt, &k3), t + dt, u, model)?;
    let mut y = y0;
    for i in 0..DIM {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    let mut next = unpack(&y, t + dt);
    for j in 0..NUM_JOINTS {
        let [lo, hi] = model.joint_limits[j];
        if next.q[j] < lo || next.q[j] > hi {
            next.q[j] = next.q[j].clamp(lo, hi);
            next.qdot[j] = 0.0;
        }
    }
    Ok(next)
}

fn integrate(
    excitations: &ExcitationProfile,
    model: &ArmModel,
    initial: &ArmState,
    mut visit: impl FnMut(&ArmState),
) -> Result<ArmState> {
    excitations.check_grid(model)?;
    let mut state = *initial;
    visit(&state);
    for (k, u) in excitations.samples.iter().enumerate() {
        state = step(&state, u, model).map_err(|e| Error::Simulation {
            step: k,
            source: Box::new(e),
        })?;
        visit(&state);
    }
    Ok(state)
}

/// Integrates the whole excitation profile, recording every state.
pub fn simulate(
    excitations: &ExcitationProfile,
    model: &ArmModel,
    initial: &ArmState,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(excitations.samples.len() + 1);
    let last = integrate(excitations, model, initial, |s| states.push(*s))?;
    let hand_positions = states
        .iter()
        .map(|s| forward_kinematics(&s.q, model))
        .collect();
    Ok(Trajectory {
        states,
        hand_positions,
        final_position: forward_kinematics(&last.q, model),
    })
}

/// Same as [`simulate`] but returns only the final hand position.
pub fn final_position(
    excitations: &ExcitationProfile,
    model: &ArmModel,
    initial: &ArmState,
) -> Result<Vec2> {
    let last = integrate(excitations, model, initial, |_| {})?;
    Ok(forward_kinematics(&last.q, model))
}
