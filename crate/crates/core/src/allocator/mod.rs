//! Control allocation: split a relative force command between Coulomb forces
//! and thrusters.
//!
//! Every allocator returns thrusts that complete the command exactly,
//! `B T + ΔF_C(x, q) = ΔF_cmd`, so allocators differ only in how much of the
//! command the charges carry. Strategies are registered by name in an
//! [`AllocatorRegistry`]:
//!
//! * `hybrid`: ε-sweep over the trace program, rank-one charge extraction,
//!   minimal-norm thrust completion, minimum-thrust selection.
//! * `thruster-only`: `q = 0`, `T = B†ΔF_cmd`.

mod epsilon;
mod hybrid;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;

pub use epsilon::{EpsilonGrid, EpsilonSearchSet, DEFAULT_EPSILON_COUNT};
pub use hybrid::HybridAllocator;

use crate::error::{Error, Result};
use crate::formation::{self, ChargeVector, FormationState, RelativeForce, ThrustVector, K_C};
use crate::linalg::{self, SymMatrix};
use crate::sdp::{SdpStatus, SolverRegistry, SolverSettings, TraceSolver};

/// Gram matrices whose top eigenvalue is below this (times `k_c`) give `q = 0`.
pub const ZERO_EIGENVALUE: f64 = 1e-18;

/// What one ε of the sweep produced.
#[derive(Debug, Clone)]
pub struct EpsilonDiagnostic {
    pub epsilon: f64,
    pub status: SdpStatus,
    /// Eigenvalues of the optimal Gram matrix, ascending. Empty on failure.
    pub eigenvalues: Vec<f64>,
    pub residual: f64,
    pub trace: f64,
    pub iterations: usize,
    /// Extracted charges; `None` when the solve did not reach optimality.
    pub charges: Option<ChargeVector>,
    pub thrust: Option<ThrustVector>,
    pub percent_error: Option<f64>,
}

impl EpsilonDiagnostic {
    pub fn thrust_norm(&self) -> Option<f64> {
        self.thrust.as_ref().map(ThrustVector::norm)
    }
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub charges: ChargeVector,
    pub thrust: ThrustVector,
    /// `None` when the thruster-only initialization was kept.
    pub chosen_epsilon: Option<f64>,
    /// Percent error of the chosen charges; `None` for a zero command.
    pub percent_error: Option<f64>,
    /// `B†ΔF_cmd`, the thruster-only allocation.
    pub thruster_only: ThrustVector,
    /// Set when no ε produced a usable candidate.
    pub fallback: bool,
    /// Set when the fallback was caused by solver failures rather than
    /// infeasibility alone.
    pub degraded: bool,
    pub diagnostics: Vec<EpsilonDiagnostic>,
}

impl AllocationResult {
    /// `‖T‖`, the quantity the allocator minimizes.
    pub fn thrust_norm(&self) -> f64 {
        self.thrust.norm()
    }

    /// Propellant proxy `Σᵢ‖Tᵢ‖`.
    pub fn propellant_proxy(&self) -> f64 {
        self.thrust.magnitude_sum()
    }

    pub fn thruster_only_proxy(&self) -> f64 {
        self.thruster_only.magnitude_sum()
    }

    /// Percent reduction of the propellant proxy against thruster-only;
    /// `None` when the baseline needs no thrust at all.
    pub fn reduction_percent(&self) -> Option<f64> {
        let base = self.thruster_only_proxy();
        (base > 0.0).then(|| 100.0 * (1.0 - self.propellant_proxy() / base))
    }

    fn thruster_only(state: &FormationState, f_cmd: &RelativeForce) -> Result<Self> {
        let thrust = complete_thrust(state, f_cmd, &ChargeVector::zeros(state.count()))?;
        let percent = if f_cmd.norm() > 0.0 { Some(100.0) } else { None };
        Ok(Self {
            charges: ChargeVector::zeros(state.count()),
            thruster_only: thrust.clone(),
            thrust,
            chosen_epsilon: None,
            percent_error: percent,
            fallback: false,
            degraded: false,
            diagnostics: Vec::new(),
        })
    }
}

/// Flips `q` so its entry of largest magnitude is positive.
pub fn canonical_sign(q: ChargeVector) -> ChargeVector {
    let lead = q.0.iter().copied().fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
    if lead < 0.0 {
        ChargeVector(-q.0)
    } else {
        q
    }
}

/// Charges from the dominant eigenpair, `q = √(λ_max / k_c) v_max`, in the
/// canonical sign.
pub fn extract_charges(q_gram: &SymMatrix) -> Result<ChargeVector> {
    let n = q_gram.dim();
    let pairs = linalg::sym_eig(q_gram)?;
    let Some(top) = pairs.last() else {
        return Err(Error::InvalidInput("empty Gram matrix".into()));
    };
    let tolerance = 1e-9 * (1.0 + q_gram.as_matrix().amax());
    if top.value < -tolerance {
        return Err(Error::InvalidInput(format!(
            "Gram matrix is not positive semidefinite (largest eigenvalue {:.3e})",
            top.value
        )));
    }
    if top.value <= ZERO_EIGENVALUE * K_C {
        return Ok(ChargeVector::zeros(n));
    }
    Ok(canonical_sign(ChargeVector(&top.vector * (top.value / K_C).sqrt())))
}

/// Minimal-norm thrusts `B†(ΔF_cmd − ΔF_C(x, q))`.
pub fn complete_thrust(
    state: &FormationState,
    f_cmd: &RelativeForce,
    q: &ChargeVector,
) -> Result<ThrustVector> {
    f_cmd.check_matches(state)?;
    let coulomb = formation::relative_coulomb_force(state, q)?;
    let pinv = linalg::difference_pseudoinverse(state.count(), state.dim())?;
    Ok(ThrustVector { dim: state.dim(), values: pinv * (&f_cmd.values - coulomb.values) })
}

/// `100·‖ΔF_C(x, q) − ΔF_cmd‖ / ‖ΔF_cmd‖`.
pub fn percent_error(state: &FormationState, q: &ChargeVector, f_cmd: &RelativeForce) -> Result<f64> {
    f_cmd.check_matches(state)?;
    let norm = f_cmd.norm();
    if norm == 0.0 {
        return Err(Error::ZeroCommand);
    }
    let coulomb = formation::relative_coulomb_force(state, q)?;
    Ok(100.0 * (coulomb.values - &f_cmd.values).norm() / norm)
}

/// `‖B T + ΔF_C(x, q) − ΔF_cmd‖`, zero up to rounding for every allocation.
pub fn command_residual(
    state: &FormationState,
    f_cmd: &RelativeForce,
    q: &ChargeVector,
    thrust: &ThrustVector,
) -> Result<f64> {
    let total: DVector<f64> = formation::relative_thrust(thrust)?.values
        + formation::relative_coulomb_force(state, q)?.values;
    Ok((total - &f_cmd.values).norm())
}

/// A control allocation strategy.
pub trait Allocator: Send + Sync {
    fn name(&self) -> &'static str;

    fn allocate(
        &self,
        state: &FormationState,
        f_cmd: &RelativeForce,
        grid: &EpsilonGrid,
    ) -> Result<AllocationResult>;
}

/// `q = 0`, all of the command from thrusters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThrusterOnlyAllocator;

impl Allocator for ThrusterOnlyAllocator {
    fn name(&self) -> &'static str {
        "thruster-only"
    }

    fn allocate(
        &self,
        state: &FormationState,
        f_cmd: &RelativeForce,
        _grid: &EpsilonGrid,
    ) -> Result<AllocationResult> {
        AllocationResult::thruster_only(state, f_cmd)
    }
}

/// Shared configuration handed to allocator constructors.
#[derive(Clone)]
pub struct AllocatorOptions {
    pub solver: Arc<dyn TraceSolver>,
    pub settings: SolverSettings,
}

impl AllocatorOptions {
    pub fn from_registry(solvers: &SolverRegistry, name: &str, settings: SolverSettings) -> Result<Self> {
        Ok(Self { solver: solvers.get(name)?, settings })
    }
}

impl Default for AllocatorOptions {
    fn default() -> Self {
        Self { solver: Arc::new(crate::sdp::AdmmSolver), settings: SolverSettings::default() }
    }
}

type AllocatorFactory = fn(&AllocatorOptions) -> Arc<dyn Allocator>;

/// Name-indexed allocator constructors.
#[derive(Clone)]
pub struct AllocatorRegistry {
    factories: BTreeMap<&'static str, AllocatorFactory>,
}

impl AllocatorRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, factory: AllocatorFactory) {
        self.factories.insert(name, factory);
    }

    pub fn build(&self, name: &str, options: &AllocatorOptions) -> Result<Arc<dyn Allocator>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "allocator",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        Ok(factory(options))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }
}

impl Default for AllocatorRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register("hybrid", |o| Arc::new(HybridAllocator::new(o.solver.clone(), o.settings)));
        registry.register("thruster-only", |_| Arc::new(ThrusterOnlyAllocator));
        registry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    pub(crate) fn four_craft() -> (FormationState, RelativeForce) {
        let state = FormationState::from_points(&[
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![5.0, 7.0],
            vec![-10.0, 2.0],
        ])
        .unwrap();
        let f = RelativeForce::new(
            2,
            DVector::from_vec(vec![-0.023, -0.067, -0.069, -0.211, -0.037, 0.1806]),
        )
        .unwrap();
        (state, f)
    }

    #[test]
    fn zero_gram_gives_zero_charges() {
        assert_eq!(extract_charges(&SymMatrix::zeros(3)).unwrap(), ChargeVector::zeros(3));
    }

    #[test]
    fn rank_one_gram_roundtrip() {
        let u = DVector::from_vec(vec![3e-6, -4e-6]);
        let gram = SymMatrix::new(&u * u.transpose() * K_C).unwrap();
        let q = extract_charges(&gram).unwrap().to_microcoulombs();
        // Canonical sign makes the −4 entry positive.
        assert_abs_diff_eq!(q[0], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q[1], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let gram = SymMatrix::new(-DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(extract_charges(&gram), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn canonical_sign_flips_negative_lead() {
        let q = canonical_sign(ChargeVector(DVector::from_vec(vec![1.0, -3.0, 2.0])));
        assert_eq!(q.0.as_slice(), &[-1.0, 3.0, -2.0]);
    }

    #[test]
    fn thruster_only_reference_column() {
        let (state, f) = four_craft();
        let t = complete_thrust(&state, &f, &ChargeVector::zeros(4)).unwrap();
        let reference = [0.0610, 0.1106, 0.0380, 0.0436, -0.0310, -0.1674, -0.0680, 0.0132];
        for (got, want) in t.values.iter().zip(reference) {
            assert!((got - want).abs() <= 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn reference_charges_thrust_completion() {
        // Reference charges for the four-craft case. The reference thrust
        // column for them carries the opposite sign of B†(ΔF_cmd − ΔF_C),
        // which is what satisfies the command.
        let (state, f) = four_craft();
        let q = ChargeVector::from_microcoulombs(&[36.61, 19.56, -27.08, 16.25]);
        let t = complete_thrust(&state, &f, &q).unwrap();
        let reference_column = [-0.0049, -0.0227, -0.0040, 0.0081, -0.0166, 0.0120, 0.0255, 0.0026];
        for (got, want) in t.values.iter().zip(reference_column) {
            assert!((got + want).abs() <= 1e-3, "{got} vs {}", -want);
        }
        assert!(command_residual(&state, &f, &q, &t).unwrap() < 1e-12);
    }

    #[test]
    fn fully_coulomb_command_needs_no_thrust() {
        let (state, _) = four_craft();
        let q = ChargeVector::from_microcoulombs(&[20.0, -10.0, 5.0, 30.0]);
        let f = formation::relative_coulomb_force(&state, &q).unwrap();
        let t = complete_thrust(&state, &f, &q).unwrap();
        assert!(t.values.amax() < 1e-15);
    }

    #[test]
    fn percent_error_limits() {
        let (state, f) = four_craft();
        assert_eq!(percent_error(&state, &ChargeVector::zeros(4), &f).unwrap(), 100.0);
        let q = ChargeVector::from_microcoulombs(&[20.0, -10.0, 5.0, 30.0]);
        let exact = formation::relative_coulomb_force(&state, &q).unwrap();
        assert!(percent_error(&state, &q, &exact).unwrap() < 1e-12);
        let zero = RelativeForce::zeros(2, 4);
        assert_eq!(percent_error(&state, &q, &zero).unwrap_err(), Error::ZeroCommand);
    }

    #[test]
    fn thruster_only_strategy() {
        let (state, f) = four_craft();
        let r = ThrusterOnlyAllocator.allocate(&state, &f, &EpsilonGrid::default()).unwrap();
        assert_eq!(r.chosen_epsilon, None);
        assert_eq!(r.thrust, r.thruster_only);
        assert_eq!(r.percent_error, Some(100.0));
        assert_abs_diff_eq!(r.reduction_percent().unwrap(), 0.0);
    }

    #[test]
    fn registry_builds_both_strategies() {
        let registry = AllocatorRegistry::default();
        assert_eq!(registry.names(), vec!["hybrid", "thruster-only"]);
        let options = AllocatorOptions::default();
        assert_eq!(registry.build("hybrid", &options).unwrap().name(), "hybrid");
        assert_eq!(registry.build("thruster-only", &options).unwrap().name(), "thruster-only");
        assert!(registry.build("greedy", &options).is_err());
    }
}
