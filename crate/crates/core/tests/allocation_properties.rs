use std::sync::Arc;

use hybrid_coulomb::allocator::{
    command_residual, complete_thrust, Allocator, EpsilonGrid, HybridAllocator, ThrusterOnlyAllocator,
};
use hybrid_coulomb::formation::{
    coulomb_force_on, coulomb_row_map, ChargeVector, FormationState, RelativeForce, K_C,
};
use hybrid_coulomb::linalg;
use hybrid_coulomb::sdp::{AdmmSolver, SolverSettings};
use nalgebra::DVector;
use proptest::prelude::*;

fn formation() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (2usize..=5, 2usize..=3).prop_flat_map(|(n, d)| {
        (Just(d), prop::collection::vec(prop::collection::vec(-20.0f64..20.0, d), n))
    })
}

fn well_separated(points: &[Vec<f64>], min: f64) -> bool {
    points.iter().enumerate().all(|(i, p)| {
        points[..i]
            .iter()
            .all(|r| p.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min)
    })
}

fn hybrid() -> HybridAllocator {
    HybridAllocator::new(Arc::new(AdmmSolver), SolverSettings::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn allocations_meet_command_and_beat_thrusters(
        (d, points) in formation(),
        raw in prop::collection::vec(-0.5f64..0.5, 12),
    ) {
        prop_assume!(well_separated(&points, 1.0));
        let state = FormationState::from_points(&points).unwrap();
        let len = d * (points.len() - 1);
        let f = RelativeForce::new(d, DVector::from_column_slice(&raw[..len])).unwrap();
        let grid = EpsilonGrid::Linear { count: 6 };

        let r = hybrid().allocate(&state, &f, &grid).unwrap();
        let residual = command_residual(&state, &f, &r.charges, &r.thrust).unwrap();
        prop_assert!(residual <= 1e-9 * (1.0 + f.norm()), "residual {}", residual);
        prop_assert!(r.thrust_norm() <= r.thruster_only.norm() * (1.0 + 1e-12));

        let baseline = ThrusterOnlyAllocator.allocate(&state, &f, &grid).unwrap();
        prop_assert_eq!(&baseline.thrust, &r.thruster_only);
        prop_assert!(command_residual(&state, &f, &baseline.charges, &baseline.thrust).unwrap()
            <= 1e-9 * (1.0 + f.norm()));

        // Flipping every charge leaves the forces, and so the thrusts, unchanged.
        let flipped = ChargeVector(-&r.charges.0);
        let t_flip = complete_thrust(&state, &f, &flipped).unwrap();
        prop_assert!((&t_flip.values - &r.thrust.values).amax() <= 1e-12 * (1.0 + r.thrust.norm()));

        let again = hybrid().allocate(&state, &f, &grid).unwrap();
        prop_assert_eq!(again.charges, r.charges);
        prop_assert_eq!(again.thrust, r.thrust);
    }

    #[test]
    fn row_map_reproduces_pairwise_force(
        (_, points) in formation(),
        micro in prop::collection::vec(-100.0f64..100.0, 5),
    ) {
        prop_assume!(well_separated(&points, 0.5));
        let state = FormationState::from_points(&points).unwrap();
        let q = ChargeVector::from_microcoulombs(&micro[..points.len()]);
        let lifted = linalg::vec(&(&q.0 * q.0.transpose()));
        for i in 0..points.len() {
            let direct = coulomb_force_on(i, &state, &q).unwrap();
            let mapped = coulomb_row_map(i, &state).unwrap() * &lifted * K_C;
            prop_assert!((&mapped - &direct).amax() <= 1e-10 * (1.0 + direct.amax()));
        }
    }
}
