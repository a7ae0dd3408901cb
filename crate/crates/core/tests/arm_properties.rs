use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use reach_core::arm::*;
use reach_core::templates::{standard_initial_state, WaveformSpec};

fn angle() -> impl Strategy<Value = f64> {
    -10.0..10.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(q1 in angle(), q2 in angle()) {
        let a = mass_matrix(&[q1, q2], &ArmModel::default());
        prop_assert_eq!(a[0][1], a[1][0]);
        prop_assert!(a[0][0] > 0.0);
        prop_assert!(a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0);
    }

    #[test]
    fn hand_stays_in_reach_annulus(q1 in angle(), q2 in angle()) {
        let model = ArmModel::default();
        let (inner, outer) = model.reach_bounds();
        let r = forward_kinematics(&[q1, q2], &model).norm();
        prop_assert!(r >= inner - 1e-12 && r <= outer + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn activations_stay_in_unit_interval(
        levels in proptest::collection::vec(prop::array::uniform6(0.0..=1.0f64), 1..8),
    ) {
        let model = ArmModel::default();
        let mut state = standard_initial_state();
        for u in &levels {
            for _ in 0..25 {
                state = step(&state, u, &model).unwrap();
                prop_assert!(state.activations.iter().all(|a| (0.0..=1.0).contains(a)));
            }
        }
    }
}

#[test]
fn zero_excitation_keeps_the_arm_still() {
    let model = ArmModel::default();
    let start = standard_initial_state();
    let trajectory = simulate(&ExcitationProfile::zeros(&model), &model, &start).unwrap();
    let p0 = forward_kinematics(&start.q, &model);
    for p in &trajectory.hand_positions {
        assert!(p.distance(p0) < 1e-9, "{p} vs {p0}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let model = ArmModel::default();
    let profile = WaveformSpec::profile(&[0.4, 0.1, 0.3, 0.0, 0.2, 0.5], &model);
    let a = simulate(&profile, &model, &standard_initial_state()).unwrap();
    let b = simulate(&profile, &model, &standard_initial_state()).unwrap();
    assert_eq!(a, b);
    let end = final_position(&profile, &model, &standard_initial_state()).unwrap();
    assert_eq!(end, a.final_position);
    assert_eq!(a.states.len(), model.integrator.steps() + 1);
    assert_abs_diff_eq!(a.states.last().unwrap().time, 1.0, epsilon = 1e-9);
}

#[test]
fn flexors_flex_and_extensors_extend() {
    let model = ArmModel::default();
    let start = standard_initial_state();
    let flex = ExcitationProfile::new(1e-3, vec![[0.0, 0.0, 0.5, 0.0, 0.0, 0.0]; 1000]).unwrap();
    let extend = ExcitationProfile::new(1e-3, vec![[0.0, 0.0, 0.0, 0.5, 0.5, 0.0]; 1000]).unwrap();
    let f = simulate(&flex, &model, &start).unwrap();
    let e = simulate(&extend, &model, &start).unwrap();
    assert!(f.states[100].q[1] > start.q[1]);
    assert!(e.states[100].q[1] < start.q[1]);
}

/// Hand position after a constant co-contraction, integrated with step `dt`.
fn reference_movement(dt: f64) -> Vec<f64> {
    let mut model = ArmModel::default();
    let duration = 0.25;
    model.integrator.dt = dt;
    model.integrator.duration = duration;
    let steps = model.integrator.steps();
    let u = [0.4, 0.3, 0.2, 0.1, 0.1, 0.2];
    let profile = ExcitationProfile::new(dt, vec![u; steps]).unwrap();
    let end = simulate(&profile, &model, &standard_initial_state()).unwrap();
    let last = end.states.last().unwrap();
    let mut y = last.q.to_vec();
    y.extend(last.qdot);
    y.extend(last.activations);
    y
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn rk4_converges_at_fourth_order() {
    let dt = 4e-3;
    let reference = reference_movement(dt / 64.0);
    let coarse = max_diff(&reference_movement(dt), &reference);
    let fine = max_diff(&reference_movement(dt / 2.0), &reference);
    let order = (coarse / fine).log2();
    assert!(order >= 3.5, "order {order} ({coarse:e} / {fine:e})");
}
