use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;

use super::{
    complete_thrust, extract_charges, percent_error, AllocationResult, Allocator, EpsilonDiagnostic,
    EpsilonGrid, EpsilonSearchSet,
};
use crate::error::Result;
use crate::formation::{ChargeVector, FormationState, RelativeForce, ThrustVector};
use crate::linalg;
use crate::sdp::{self, SdpSolution, SdpStatus, SolverSettings, TraceSolver};

/// Trace-heuristic allocator.
///
/// For each ε in the search set: solve the trace program, take the dominant
/// eigenpair as the charges, complete with minimal-norm thrusts. The candidate
/// with the smallest `‖T‖` wins; ties go to the smaller ε. The thruster-only
/// allocation seeds the search, so the result is never worse than it.
#[derive(Clone)]
pub struct HybridAllocator {
    solver: Arc<dyn TraceSolver>,
    settings: SolverSettings,
}

impl HybridAllocator {
    pub fn new(solver: Arc<dyn TraceSolver>, settings: SolverSettings) -> Self {
        Self { solver, settings }
    }

    /// Solves and evaluates every ε of `set`, in order. Tolerances below the
    /// certified reach of the Coulomb forces are marked infeasible unsolved.
    pub fn sweep(
        &self,
        state: &FormationState,
        f_cmd: &RelativeForce,
        set: &EpsilonSearchSet,
    ) -> Result<Vec<EpsilonDiagnostic>> {
        let floor = sdp::unreachable_radius(&sdp::build_trace_problem(state, f_cmd, 0.0)?);
        set.values()
            .par_iter()
            .map(|&epsilon| self.evaluate(state, f_cmd, epsilon, floor))
            .collect()
    }

    fn evaluate(
        &self,
        state: &FormationState,
        f_cmd: &RelativeForce,
        epsilon: f64,
        floor: f64,
    ) -> Result<EpsilonDiagnostic> {
        let problem = sdp::build_trace_problem(state, f_cmd, epsilon)?;
        let solution = if epsilon < floor {
            SdpSolution::failed(&problem, SdpStatus::Infeasible, 0)
        } else {
            self.solver.solve(&problem, &self.settings)
        };
        let mut diag = EpsilonDiagnostic {
            epsilon,
            status: solution.status,
            eigenvalues: Vec::new(),
            residual: solution.residual,
            trace: solution.trace,
            iterations: solution.iterations,
            charges: None,
            thrust: None,
            percent_error: None,
        };
        if solution.status != SdpStatus::Optimal {
            return Ok(diag);
        }
        let eigenvalues = match linalg::sym_eig(&solution.q) {
            Ok(pairs) => pairs.into_iter().map(|p| p.value).collect(),
            Err(_) => {
                diag.status = SdpStatus::NumericalFailure;
                return Ok(diag);
            }
        };
        diag.eigenvalues = eigenvalues;
        let charges = match extract_charges(&solution.q) {
            Ok(q) => q,
            Err(_) => {
                diag.status = SdpStatus::NumericalFailure;
                return Ok(diag);
            }
        };
        diag.thrust = Some(complete_thrust(state, f_cmd, &charges)?);
        diag.percent_error = Some(percent_error(state, &charges, f_cmd)?);
        diag.charges = Some(charges);
        Ok(diag)
    }
}

impl Allocator for HybridAllocator {
    fn name(&self) -> &'static str {
        "hybrid"
    }

    fn allocate(
        &self,
        state: &FormationState,
        f_cmd: &RelativeForce,
        grid: &EpsilonGrid,
    ) -> Result<AllocationResult> {
        let mut result = AllocationResult::thruster_only(state, f_cmd)?;
        let norm = f_cmd.norm();
        if norm == 0.0 {
            return Ok(result);
        }
        let set = match grid.resolve(norm) {
            Ok(set) => set,
            Err(_) => {
                result.fallback = true;
                return Ok(result);
            }
        };
        let diagnostics = self.sweep(state, f_cmd, &set)?;

        let best = diagnostics
            .iter()
            .filter_map(|d| Some((d, d.thrust_norm()?)))
            .min_by(|(a, na), (b, nb)| {
                na.total_cmp(nb).then_with(|| a.epsilon.partial_cmp(&b.epsilon).unwrap_or(Ordering::Equal))
            });

        match best {
            Some((d, n)) if n <= result.thrust_norm() => {
                result.charges = d.charges.clone().unwrap_or_else(|| ChargeVector::zeros(state.count()));
                result.thrust = d.thrust.clone().unwrap_or_else(|| ThrustVector::zeros(state.dim(), state.count()));
                result.chosen_epsilon = Some(d.epsilon);
                result.percent_error = d.percent_error;
            }
            Some(_) => {}
            None => {
                result.fallback = true;
                result.degraded = diagnostics.iter().any(|d| d.status == SdpStatus::NumericalFailure);
            }
        }
        result.diagnostics = diagnostics;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::command_residual;
    use crate::allocator::tests::four_craft;
    use crate::sdp::AdmmSolver;
    use nalgebra::DVector;

    fn allocator() -> HybridAllocator {
        HybridAllocator::new(Arc::new(AdmmSolver), SolverSettings::default())
    }

    #[test]
    fn zero_command_short_circuits() {
        let (state, _) = four_craft();
        let zero = RelativeForce::zeros(2, 4);
        let r = allocator().allocate(&state, &zero, &EpsilonGrid::default()).unwrap();
        assert_eq!(r.charges, ChargeVector::zeros(4));
        assert_eq!(r.thrust.values, DVector::zeros(8));
        assert!(r.diagnostics.is_empty());
        assert_eq!(r.percent_error, None);
        assert_eq!(r.reduction_percent(), None);
    }

    #[test]
    fn near_norm_epsilon_is_near_thruster_only() {
        let (state, f) = four_craft();
        let grid = EpsilonGrid::Explicit { values: vec![0.999 * f.norm()] };
        let r = allocator().allocate(&state, &f, &grid).unwrap();
        let gap = (&r.thrust.values - &r.thruster_only.values).norm();
        assert!(gap < 0.01 * r.thruster_only.norm(), "gap {gap}");
        assert!(r.thrust_norm() <= r.thruster_only.norm());
    }

    #[test]
    fn perpendicular_two_craft_command_gets_no_charge() {
        let state = FormationState::from_points(&[vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        let f = RelativeForce::new(2, DVector::from_vec(vec![0.0, 0.2])).unwrap();
        let r = allocator().allocate(&state, &f, &EpsilonGrid::default()).unwrap();
        assert!(r.charges.0.amax() < 1e-9);
        assert!((&r.thrust.values - &r.thruster_only.values).amax() < 1e-9);
        assert_eq!(r.chosen_epsilon, None);
        assert!(r.fallback);
        assert!(!r.degraded);
    }

    #[test]
    fn four_craft_coarse_grid_selects_reference_charges() {
        let (state, f) = four_craft();
        let values = (1..=11).map(|k| 0.025 * k as f64).collect();
        let r = allocator().allocate(&state, &f, &EpsilonGrid::Explicit { values }).unwrap();
        assert_eq!(r.chosen_epsilon, Some(0.05));
        let q = r.charges.to_microcoulombs();
        for (got, want) in q.iter().zip([36.61, 19.56, -27.08, 16.25]) {
            assert!((got - want).abs() <= 0.02 * want.abs(), "{got} vs {want}");
        }
        assert!(command_residual(&state, &f, &r.charges, &r.thrust).unwrap() <= 1e-9);
    }

    #[test]
    fn infeasible_small_epsilons_are_recorded() {
        let (state, f) = four_craft();
        let grid = EpsilonGrid::Explicit { values: vec![0.005, 0.05] };
        let r = allocator().allocate(&state, &f, &grid).unwrap();
        assert_eq!(r.diagnostics[0].status, SdpStatus::Infeasible);
        assert!(r.diagnostics[0].charges.is_none());
        assert_eq!(r.diagnostics[1].status, SdpStatus::Optimal);
        assert_eq!(r.chosen_epsilon, Some(0.05));
    }
}
