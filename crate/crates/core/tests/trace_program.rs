use hybrid_coulomb::allocator::extract_charges;
use hybrid_coulomb::formation::{ChargeVector, FormationState, RelativeForce, K_C, MICRO};
use hybrid_coulomb::linalg::{self, sym_eig};
use hybrid_coulomb::sdp::{
    build_trace_problem, solve_trace, SdpSolution, SdpStatus, TraceProblem, DEFAULT_TOLERANCE,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn four_craft() -> (FormationState, RelativeForce) {
    let state = FormationState::from_points(&[
        vec![0.0, 0.0],
        vec![10.0, 0.0],
        vec![5.0, 7.0],
        vec![-10.0, 2.0],
    ])
    .unwrap();
    let f = RelativeForce::new(2, DVector::from_vec(vec![-0.023, -0.067, -0.069, -0.211, -0.037, 0.1806]))
        .unwrap();
    (state, f)
}

fn solve(state: &FormationState, f: &RelativeForce, eps: f64) -> (TraceProblem, SdpSolution) {
    let p = build_trace_problem(state, f, eps).unwrap();
    let s = solve_trace(&p, DEFAULT_TOLERANCE);
    (p, s)
}

fn assert_feasible(p: &TraceProblem, s: &SdpSolution) {
    assert_eq!(s.status, SdpStatus::Optimal);
    let eig = sym_eig(&s.q).unwrap();
    assert!(eig[0].value >= -1e-7 * (1.0 + s.trace), "λmin {}", eig[0].value);
    assert!(p.residual(&s.q) <= p.epsilon() * (1.0 + 1e-6), "residual {}", p.residual(&s.q));
    assert!((s.q.trace() - s.trace).abs() <= 1e-9 * (1.0 + s.trace));
}

#[test]
fn zero_command_gives_zero_gram() {
    let (state, _) = four_craft();
    let (_, s) = solve(&state, &RelativeForce::zeros(2, 4), 0.0);
    assert_eq!(s.status, SdpStatus::Optimal);
    assert_eq!(s.trace, 0.0);
    assert_eq!(s.q.as_matrix().amax(), 0.0);
}

#[test]
fn tolerance_beyond_command_norm_gives_zero_gram() {
    let (state, f) = four_craft();
    for eps in [f.norm(), 0.3, 1.0] {
        let (_, s) = solve(&state, &f, eps);
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!(s.trace <= 1e-10 * K_C * MICRO * MICRO);
    }
}

#[test]
fn four_craft_reference_charges() {
    let (state, f) = four_craft();
    let (p, s) = solve(&state, &f, 0.05);
    assert_feasible(&p, &s);
    assert!((s.trace - 25.7707).abs() < 1e-3, "trace {}", s.trace);
    let q = extract_charges(&s.q).unwrap().to_microcoulombs();
    for (got, want) in q.iter().zip([36.61, 19.56, -27.08, 16.25]) {
        assert!((got - want).abs() <= 0.02 * want.abs(), "{got} vs {want}");
    }
}

#[test]
fn four_craft_large_tolerances_are_rank_one() {
    let (state, f) = four_craft();
    for eps in [0.06, 0.1, 0.15, 0.2, 0.25, 0.29] {
        let (p, s) = solve(&state, &f, eps);
        assert_feasible(&p, &s);
        let eig = sym_eig(&s.q).unwrap();
        let top = eig[3].value;
        assert!(eig[2].value <= 1e-4 * top, "ε={eps}: λ₂/λmax = {}", eig[2].value / top);
    }
}

#[test]
fn four_craft_small_tolerance_is_infeasible() {
    // Central forces exert no net torque, so part of the command is out of reach.
    let (state, f) = four_craft();
    for eps in [0.0, 0.005, 0.01] {
        let (_, s) = solve(&state, &f, eps);
        assert_eq!(s.status, SdpStatus::Infeasible, "ε={eps}");
    }
}

#[test]
fn trace_is_monotone_in_tolerance() {
    let (state, f) = four_craft();
    let traces: Vec<f64> = [0.02, 0.04, 0.06, 0.1, 0.15, 0.2, 0.25, 0.29]
        .iter()
        .map(|&e| {
            let (p, s) = solve(&state, &f, e);
            assert_feasible(&p, &s);
            s.trace
        })
        .collect();
    for w in traces.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-5) + 1e-9, "{traces:?}");
    }
}

// Two craft on a line at distance 10: A vec(Q) = Q₁₂/50, so the optimum is
// Tr = 100(|f| − ε) with |Q₁₂| = 50(|f| − ε) and equal diagonal entries.
#[test]
fn two_craft_line_closed_form() {
    let state = FormationState::from_points(&[vec![0.0], vec![10.0]]).unwrap();
    for (fv, eps) in [(0.5, 0.1), (-0.3, 0.0), (0.02, 0.019), (-1.0, 0.5)] {
        let f = RelativeForce::new(1, DVector::from_vec(vec![fv])).unwrap();
        let (p, s) = solve(&state, &f, eps);
        assert_feasible(&p, &s);
        let want = 100.0 * (f64::abs(fv) - eps);
        assert!((s.trace - want).abs() <= 1e-3 * want, "f={fv} ε={eps}: {} vs {want}", s.trace);
        let q12 = s.q.as_matrix()[(0, 1)];
        let charge = (q12.abs() / K_C).sqrt();
        let q = extract_charges(&s.q).unwrap();
        for qi in q.0.iter() {
            assert!((qi.abs() - charge).abs() <= 1e-3 * charge);
        }
        assert_eq!(q12.signum(), fv.signum());
    }
}

/// Smallest `k_c‖q‖²` over a charge grid meeting the tolerance.
fn grid_optimum(state: &FormationState, f: &RelativeForce, eps: f64, points: usize, range: f64) -> f64 {
    let n = state.count();
    let a = hybrid_coulomb::formation::relative_coulomb_matrix(state).unwrap() * K_C;
    let axis: Vec<f64> = (0..points)
        .map(|k| (-range + 2.0 * range * k as f64 / (points - 1) as f64) * MICRO)
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let q = DVector::from_iterator(n, idx.iter().map(|&k| axis[k]));
        let cost = K_C * q.norm_squared();
        if cost < best {
            let outer = &q * q.transpose();
            if (&a * linalg::vec(&outer) - &f.values).norm() <= eps {
                best = cost;
            }
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            return best;
        }
    }
}

fn grid_case() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<i32>, f64)> {
    (2usize..=3, 1usize..=2).prop_flat_map(|(n, d)| {
        (
            Just(n),
            Just(d),
            prop::collection::vec(-15.0f64..15.0, n * d),
            prop::collection::vec(-15i32..=15, n),
            0.05f64..0.5,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // A relaxation can only undercut rank-one charge assignments.
    #[test]
    fn relaxation_lower_bounds_charge_grid((n, d, coords, charges, rel) in grid_case()) {
        let points: Vec<Vec<f64>> = coords.chunks(d).map(|c| c.to_vec()).collect();
        let Ok(state) = FormationState::from_points(&points) else { return Ok(()) };
        for i in 0..n {
            for j in 0..i {
                let gap: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
                prop_assume!(gap.sqrt() >= 2.0);
            }
        }
        // Multiples of 10 μC lie on both search grids below.
        let micro: Vec<f64> = charges.iter().map(|&k| 10.0 * k as f64).collect();
        let q = ChargeVector::from_microcoulombs(&micro);
        let f = hybrid_coulomb::formation::relative_coulomb_force(&state, &q).unwrap();
        prop_assume!(f.norm() > 1e-6);
        let eps = rel * f.norm();
        let (p, s) = solve(&state, &f, eps);
        prop_assert_eq!(s.status, SdpStatus::Optimal);
        let eig = sym_eig(&s.q).unwrap();
        prop_assert!(eig[0].value >= -1e-7 * (1.0 + s.trace));
        prop_assert!(p.residual(&s.q) <= eps * (1.0 + 1e-6));

        let per_axis = if n == 2 { 201 } else { 41 };
        let grid = grid_optimum(&state, &f, eps, per_axis, 200.0);
        prop_assert!(grid.is_finite());
        let slack = 1e-4 * grid + 1e-6 * K_C * MICRO * MICRO;
        prop_assert!(grid >= s.trace - slack, "grid {} < relaxation {}", grid, s.trace);
        // The generating charges are feasible, so the relaxation beats them too.
        prop_assert!(s.trace <= K_C * q.0.norm_squared() * (1.0 + 1e-4) + slack);
    }
}
