//! Planar two-joint, six-muscle upper extremity.

mod dynamics;
mod model;
mod muscle;

pub use dynamics::{
    dynamics_rhs, environment_forces, final_position, forward_kinematics, mass_matrix,
    muscle_forces, simulate, step, ArmState, ExcitationProfile, Joint, PerMuscle, Trajectory,
};
pub use model::{
    ArmModel, IntegratorParams, LinkParams, MuscleName, MuscleParams, NUM_JOINTS, NUM_MUSCLES,
    STANDARD_POSTURE,
};
pub use muscle::{
    activation_derivative, force_length, force_velocity, muscle_force, muscle_geometry,
    passive_force, VELOCITY_SCALE,
};
