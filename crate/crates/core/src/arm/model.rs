//! Physical description of the planar two-joint, six-muscle arm and its
//! JSON parameter file.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 2;
pub const NUM_MUSCLES: usize = 6;

/// Joint posture every template and experiment movement starts from
/// (shoulder, elbow) in radians.
pub const STANDARD_POSTURE: [f64; NUM_JOINTS] = [FRAC_PI_4, FRAC_PI_2];

/// The six muscles, in the fixed order used by every per-muscle array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MuscleName {
    #[serde(rename = "BIClong")]
    BicLong,
    #[serde(rename = "BICshort")]
    BicShort,
    #[serde(rename = "BRA")]
    Bra,
    #[serde(rename = "TRIlat")]
    TriLat,
    #[serde(rename = "TRImed")]
    TriMed,
    #[serde(rename = "TRIlong")]
    TriLong,
}

impl MuscleName {
    pub const ALL: [MuscleName; NUM_MUSCLES] = [
        MuscleName::BicLong,
        MuscleName::BicShort,
        MuscleName::Bra,
        MuscleName::TriLat,
        MuscleName::TriMed,
        MuscleName::TriLong,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MuscleName::BicLong => "BIClong",
            MuscleName::BicShort => "BICshort",
            MuscleName::Bra => "BRA",
            MuscleName::TriLat => "TRIlat",
            MuscleName::TriMed => "TRImed",
            MuscleName::TriLong => "TRIlong",
        }
    }
}

/// Hill-type muscle constants with a constant-moment-arm path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleParams {
    pub name: MuscleName,
    /// Maximum isometric force (N).
    pub max_isometric_force: f64,
    /// Optimal fiber length (m), the normalizer of fiber length.
    pub optimal_fiber_length: f64,
    /// Activation time constant (s).
    pub tau_act: f64,
    /// Deactivation time constant (s).
    pub tau_deact: f64,
    /// Signed moment arm on (shoulder, elbow) in m. Positive flexes the joint.
    pub moment_arms: [f64; NUM_JOINTS],
    /// Fiber length (m) with both joint angles at zero.
    pub rest_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Upper arm and forearm lengths (m).
    pub lengths: [f64; NUM_JOINTS],
    pub masses: [f64; NUM_JOINTS],
    /// Distance from the proximal joint to each link's center of mass (m).
    pub com_offsets: [f64; NUM_JOINTS],
    /// Moments of inertia about each link's center of mass (kg m^2).
    pub inertias: [f64; NUM_JOINTS],
    /// Viscous joint damping (N m s / rad).
    pub damping: [f64; NUM_JOINTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorParams {
    pub dt: f64,
    pub duration: f64,
}

impl IntegratorParams {
    /// Number of fixed steps covering the movement.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Immutable arm description. This is also the on-disk parameter file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    pub links: LinkParams,
    /// Gravitational acceleration (m/s^2) along -y of the shoulder frame.
    pub gravity: f64,
    pub muscles: [MuscleParams; NUM_MUSCLES],
    pub integrator: IntegratorParams,
    /// Closed (lower, upper) angle interval per joint (rad).
    pub joint_limits: [[f64; 2]; NUM_JOINTS],
}

impl ArmModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        let l = &self.links;
        for j in 0..NUM_JOINTS {
            for (what, v) in [
                ("link length", l.lengths[j]),
                ("link mass", l.masses[j]),
                ("link inertia", l.inertias[j]),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{what} of link {j} must be positive, got {v}"));
                }
            }
            if !(l.com_offsets[j] >= 0.0 && l.com_offsets[j].is_finite()) {
                return bad(format!("com offset of link {j} must be non-negative"));
            }
            if !(l.damping[j] >= 0.0 && l.damping[j].is_finite()) {
                return bad(format!("damping of joint {j} must be non-negative"));
            }
            let [lo, hi] = self.joint_limits[j];
            if !(lo < hi) {
                return bad(format!("joint {j} limits [{lo}, {hi}] are empty"));
            }
        }
        if !self.gravity.is_finite() {
            return bad("gravity must be finite".into());
        }
        let integ = &self.integrator;
        if !(integ.dt > 0.0 && integ.duration > 0.0) {
            return bad("integrator dt and duration must be positive".into());
        }
        let steps = integ.steps();
        if steps == 0 || (steps as f64 * integ.dt - integ.duration).abs() > 1e-9 {
            return bad(format!(
                "duration {} is not an integer multiple of dt {}",
                integ.duration, integ.dt
            ));
        }
        for (i, m) in self.muscles.iter().enumerate() {
            let expected = MuscleName::ALL[i];
            if m.name != expected {
                return bad(format!(
                    "muscle {i} is {}, expected {} (order is fixed)",
                    m.name.as_str(),
                    expected.as_str()
                ));
            }
            if !(m.max_isometric_force > 0.0 && m.optimal_fiber_length > 0.0) {
                return bad(format!("{}: F0 and l0 must be positive", expected.as_str()));
            }
            if !(m.tau_act > 0.0 && m.tau_act <= m.tau_deact) {
                return bad(format!(
                    "{}: need 0 < tau_act <= tau_deact",
                    expected.as_str()
                ));
            }
            if m.moment_arms.iter().all(|r| *r == 0.0) {
                return bad(format!("{} has no nonzero moment arm", expected.as_str()));
            }
            if !m.rest_length.is_finite() {
                return bad(format!("{}: rest length must be finite", expected.as_str()));
            }
        }
        Ok(())
    }

    pub fn reach_bounds(&self) -> (f64, f64) {
        let [l1, l2] = self.links.lengths;
        ((l1 - l2).abs(), l1 + l2)
    }

    /// Moment-arm matrix R (2 x 6), row per joint.
    pub fn moment_arm_matrix(&self) -> [[f64; NUM_MUSCLES]; NUM_JOINTS] {
        let mut r = [[0.0; NUM_MUSCLES]; NUM_JOINTS];
        for (m, muscle) in self.muscles.iter().enumerate() {
            for (j, row) in r.iter_mut().enumerate() {
                row[m] = muscle.moment_arms[j];
            }
        }
        r
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("arm model serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ArmModel = serde_json::from_str(text).map_err(|e| Error::schema(text, &e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("arm model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Normalized fiber length every muscle has at the standard posture in the
/// default arm. Sits on the ascending limb of the force-length curve so that
/// co-contraction is posturally stable.
const DEFAULT_POSTURE_FIBER_RATIO: f64 = 0.7;

impl Default for ArmModel {
    /// Upper-arm model moving in the horizontal plane (no gravity).
    ///
    /// Flexor and extensor capacities `sum(F0 * r)` balance on each joint, so
    /// with every muscle at the same normalized length the passive torques
    /// cancel and the standard posture is a rest equilibrium.
    fn default() -> Self {
        // (name, F0, l0, shoulder arm, elbow arm)
        let table: [(MuscleName, f64, f64, f64, f64); NUM_MUSCLES] = [
            (MuscleName::BicLong, 600.0, 0.12, 0.03, 0.025),
            (MuscleName::BicShort, 500.0, 0.13, 0.024, 0.03),
            (MuscleName::Bra, 900.0, 0.09, 0.0, 0.02),
            (MuscleName::TriLat, 600.0, 0.11, 0.0, -0.02),
            (MuscleName::TriMed, 600.0, 0.11, 0.0, -0.02),
            (MuscleName::TriLong, 750.0, 0.13, -0.04, -0.032),
        ];
        let muscles = table.map(|(name, f0, l0, r_shoulder, r_elbow)| {
            let moment_arms = [r_shoulder, r_elbow];
            let shortening: f64 = moment_arms
                .iter()
                .zip(STANDARD_POSTURE)
                .map(|(r, q)| r * q)
                .sum();
            MuscleParams {
                name,
                max_isometric_force: f0,
                optimal_fiber_length: l0,
                tau_act: 0.01,
                tau_deact: 0.04,
                moment_arms,
                rest_length: DEFAULT_POSTURE_FIBER_RATIO * l0 + shortening,
            }
        });
        ArmModel {
            links: LinkParams {
                lengths: [0.55, 0.55],
                masses: [3.72, 3.06],
                com_offsets: [0.24, 0.25],
                inertias: [0.094, 0.078],
                damping: [0.5, 0.5],
            },
            gravity: 0.0,
            muscles,
            integrator: IntegratorParams {
                dt: 1e-3,
                duration: 1.0,
            },
            joint_limits: [[-FRAC_PI_2, PI], [0.0, 2.8]],
        }
    }
}
