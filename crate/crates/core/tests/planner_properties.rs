use std::f64::consts::PI;

use proptest::prelude::*;
use reach_core::arm::ExcitationProfile;
use reach_core::planner::{blend_excitations, compute_weights, estimate_position};
use reach_core::Vec2;

fn point() -> impl Strategy<Value = Vec2> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn instance() -> impl Strategy<Value = (Vec2, Vec<Vec2>)> {
    (point(), proptest::collection::vec(point(), 1..7))
}

fn profiles(n: usize) -> impl Strategy<Value = Vec<ExcitationProfile>> {
    proptest::collection::vec(
        proptest::collection::vec(prop::array::uniform6(0.0..=1.0f64), 5),
        n,
    )
    .prop_map(|ps| {
        ps.into_iter()
            .map(|samples| ExcitationProfile { dt: 0.01, samples })
            .collect()
    })
}

fn blend_instance() -> impl Strategy<Value = (Vec2, Vec<Vec2>, Vec<ExcitationProfile>)> {
    (point(), 1..7usize).prop_flat_map(|(target, n)| {
        (
            Just(target),
            proptest::collection::vec(point(), n),
            profiles(n),
        )
    })
}

/// A point lies in the convex hull of a set iff, seen from the point, no
/// angular gap between the set's directions exceeds pi.
fn in_hull(p: Vec2, points: &[Vec2], tol: f64) -> bool {
    if points.iter().any(|q| q.distance(p) <= tol) {
        return true;
    }
    let mut angles: Vec<f64> = points
        .iter()
        .map(|q| (q.y - p.y).atan2(q.x - p.x))
        .collect();
    angles.sort_by(f64::total_cmp);
    let mut max_gap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    if max_gap <= PI + 1e-9 {
        return true;
    }
    // Collinear sets have zero area; fall back to the distance to segments.
    points.iter().enumerate().any(|(i, a)| {
        points[i + 1..].iter().any(|b| {
            let ab = *b - *a;
            let len2 = ab.dot(ab);
            if len2 == 0.0 {
                return false;
            }
            let t = ((p - *a).dot(ab) / len2).clamp(0.0, 1.0);
            (*a + ab * t).distance(p) <= tol
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weights_lie_on_the_simplex((target, ps) in instance()) {
        let w = compute_weights(target, &ps);
        prop_assert_eq!(w.len(), ps.len());
        prop_assert!(w.iter().all(|w| *w >= 0.0 && w.is_finite()));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blend_stays_between_inputs((target, ps, inputs) in blend_instance()) {
        let w = compute_weights(target, &ps);
        let refs: Vec<&ExcitationProfile> = inputs.iter().collect();
        let (blend, clamped) = blend_excitations(&w, &refs).unwrap();
        prop_assert_eq!(clamped, 0);
        for (k, sample) in blend.samples.iter().enumerate() {
            for (m, u) in sample.iter().enumerate() {
                let lo = inputs.iter().map(|p| p.samples[k][m]).fold(f64::INFINITY, f64::min);
                let hi = inputs.iter().map(|p| p.samples[k][m]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*u >= lo - 1e-12 && *u <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn estimate_lies_in_template_hull((target, ps) in instance()) {
        let w = compute_weights(target, &ps);
        let estimate = estimate_position(&w, &ps);
        prop_assert!(in_hull(estimate, &ps, 1e-9), "{} outside hull of {:?}", estimate, ps);
    }

    #[test]
    fn weights_follow_template_permutation((target, ps) in instance(), rotate in 0usize..7) {
        let w = compute_weights(target, &ps);
        let mut permuted = ps.clone();
        permuted.reverse();
        let k = rotate % permuted.len();
        permuted.rotate_left(k);
        let mut expected = w.clone();
        expected.reverse();
        expected.rotate_left(k);
        let wp = compute_weights(target, &permuted);
        for (a, b) in wp.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let e1 = estimate_position(&w, &ps);
        let e2 = estimate_position(&wp, &permuted);
        prop_assert!(e1.distance(e2) < 1e-12);
    }

    #[test]
    fn closer_templates_weigh_more((target, ps) in instance()) {
        let w = compute_weights(target, &ps);
        for i in 0..ps.len() {
            for j in 0..ps.len() {
                if target.distance(ps[i]) < target.distance(ps[j]) {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }
}
