//! Trace minimization over the PSD cone with a norm-ball fit constraint:
//!
//! ```text
//! minimize    Tr(Q)
//! subject to  ‖A vec(Q) − f‖ ≤ ε
//!             Q ⪰ 0
//! ```
//!
//! Backends implement [`TraceSolver`] and are looked up by name through a
//! [`SolverRegistry`]. The embedded default is an ADMM splitting over the PSD
//! cone and the fit ball (`"admm"`).

mod admm;
mod screen;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use admm::AdmmSolver;
pub use screen::unreachable_radius;

use crate::error::{Error, Result};
use crate::formation::{self, FormationState, RelativeForce, K_C, MICRO};
use crate::linalg::{self, SymMatrix};

/// Default relative tolerance on the primal and dual residuals.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Default iteration cap for first-order backends.
pub const DEFAULT_MAX_ITERATIONS: usize = 50_000;

/// Absolute trace tolerance: one part in a million of a 1 μC² Gram entry.
pub const TRACE_ABS_TOLERANCE: f64 = 1e-6 * K_C * MICRO * MICRO;

/// Relative trace tolerance against a reference optimum.
pub const TRACE_REL_TOLERANCE: f64 = 1e-4;

/// One instance of the trace program.
#[derive(Debug, Clone)]
pub struct TraceProblem {
    a: DMatrix<f64>,
    f_cmd: DVector<f64>,
    epsilon: f64,
    n: usize,
}

impl TraceProblem {
    pub fn new(a: DMatrix<f64>, f_cmd: DVector<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epsilon must be finite and non-negative, got {epsilon}"
            )));
        }
        let n = (a.ncols() as f64).sqrt().round() as usize;
        if n * n != a.ncols() || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "map has {} columns, which is not a perfect square",
                a.ncols()
            )));
        }
        if a.nrows() != f_cmd.len() {
            return Err(Error::DimensionMismatch(format!(
                "map has {} rows but the command has {} entries",
                a.nrows(),
                f_cmd.len()
            )));
        }
        if a.iter().chain(f_cmd.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("problem data must be finite".into()));
        }
        Ok(Self { a, f_cmd, epsilon, n })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn f_cmd(&self) -> &DVector<f64> {
        &self.f_cmd
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Side length of the matrix variable.
    pub fn n(&self) -> usize {
        self.n
    }

    /// `‖A vec(Q) − f‖`.
    pub fn residual(&self, q: &SymMatrix) -> f64 {
        (&self.a * linalg::vec(q.as_matrix()) - &self.f_cmd).norm()
    }

    /// `A` restricted to symmetric matrices in scaled-triangle coordinates
    /// (see [`svec`]), so that `A vec(Q) = M svec(Q)`.
    pub fn symmetric_map(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(self.a.nrows(), n * (n + 1) / 2);
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                if i == j {
                    m.set_column(k, &self.a.column(i + j * n));
                } else {
                    let col = (self.a.column(i + j * n) + self.a.column(j + i * n))
                        * std::f64::consts::FRAC_1_SQRT_2;
                    m.set_column(k, &col);
                }
                k += 1;
            }
        }
        m
    }
}

/// Assembles the trace program for a formation and a relative force command.
pub fn build_trace_problem(
    state: &FormationState,
    f_cmd: &RelativeForce,
    epsilon: f64,
) -> Result<TraceProblem> {
    f_cmd.check_matches(state)?;
    let a = formation::relative_coulomb_matrix(state)?;
    TraceProblem::new(a, f_cmd.values.clone(), epsilon)
}

/// Upper triangle, column by column, off-diagonals scaled by √2 so that
/// `⟨X, Y⟩ = svec(X)·svec(Y)`.
pub fn svec(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            out[k] = if i == j { x[(i, i)] } else { x[(i, j)] * std::f64::consts::SQRT_2 };
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out[(i, i)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                out[(i, j)] = x;
                out[(j, i)] = x;
            }
            k += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub q: SymMatrix,
    pub status: SdpStatus,
    /// `‖A vec(Q) − f‖` of the returned matrix.
    pub residual: f64,
    pub trace: f64,
    /// Relative primal-dual gap at termination.
    pub gap_estimate: f64,
    pub iterations: usize,
}

impl SdpSolution {
    /// The all-zero matrix, which is optimal whenever `ε ≥ ‖f‖`.
    pub fn zero(problem: &TraceProblem) -> Self {
        Self {
            q: SymMatrix::zeros(problem.n()),
            status: SdpStatus::Optimal,
            residual: problem.f_cmd().norm(),
            trace: 0.0,
            gap_estimate: 0.0,
            iterations: 0,
        }
    }

    pub fn failed(problem: &TraceProblem, status: SdpStatus, iterations: usize) -> Self {
        Self {
            q: SymMatrix::zeros(problem.n()),
            status,
            residual: f64::NAN,
            trace: f64::NAN,
            gap_estimate: f64::NAN,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: DEFAULT_TOLERANCE, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

/// A backend for the trace program.
pub trait TraceSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solves one instance. Failures are reported through the status, never by
    /// panicking.
    fn solve(&self, problem: &TraceProblem, settings: &SolverSettings) -> SdpSolution;
}

/// Name-indexed collection of trace backends.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Arc<dyn TraceSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self { solvers: BTreeMap::new() }
    }

    pub fn register(&mut self, solver: Arc<dyn TraceSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TraceSolver>> {
        self.solvers.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "solver",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Arc::new(AdmmSolver));
        registry
    }
}

/// Solves with the default embedded backend.
pub fn solve_trace(problem: &TraceProblem, tol: f64) -> SdpSolution {
    let settings = SolverSettings { tol, ..SolverSettings::default() };
    AdmmSolver.solve(problem, &settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn svec_roundtrip_and_inner_product() {
        let x = dmatrix![2.0, -1.0, 0.5; -1.0, 3.0, 4.0; 0.5, 4.0, -2.0];
        let y = dmatrix![1.0, 2.0, 0.0; 2.0, -1.0, 1.0; 0.0, 1.0, 5.0];
        assert_abs_diff_eq!(smat(&svec(&x), 3), x, epsilon = 1e-15);
        assert_abs_diff_eq!(svec(&x).dot(&svec(&y)), x.dot(&y), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_map_agrees_with_full_map() {
        let state = FormationState::from_points(&[
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![5.0, 7.0],
        ])
        .unwrap();
        let f = RelativeForce::new(2, DVector::from_vec(vec![0.1, 0.0, -0.2, 0.3])).unwrap();
        let p = build_trace_problem(&state, &f, 0.01).unwrap();
        let x = dmatrix![2.0, -1.0, 0.5; -1.0, 3.0, 4.0; 0.5, 4.0, -2.0];
        let full = p.a() * linalg::vec(&x);
        let tri = p.symmetric_map() * svec(&x);
        assert_abs_diff_eq!(full, tri, epsilon = 1e-14);
    }

    #[test]
    fn problem_validation() {
        let a = DMatrix::zeros(2, 4);
        assert!(TraceProblem::new(a.clone(), DVector::zeros(2), -1.0).is_err());
        assert!(TraceProblem::new(a.clone(), DVector::zeros(3), 0.0).is_err());
        assert!(TraceProblem::new(DMatrix::zeros(2, 5), DVector::zeros(2), 0.0).is_err());
        assert_eq!(TraceProblem::new(a, DVector::zeros(2), 0.0).unwrap().n(), 2);
    }

    #[test]
    fn four_craft_problem_shape() {
        let state = FormationState::from_points(&[
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![5.0, 7.0],
            vec![-10.0, 2.0],
        ])
        .unwrap();
        let f = RelativeForce::new(2, DVector::zeros(6)).unwrap();
        let p = build_trace_problem(&state, &f, 0.05).unwrap();
        assert_eq!(p.a().shape(), (6, 16));
        assert_eq!(p.n(), 4);
    }

    #[test]
    fn registry_lookup() {
        let registry = SolverRegistry::default();
        assert_eq!(registry.names(), vec!["admm"]);
        assert_eq!(registry.get("admm").unwrap().name(), "admm");
        assert!(matches!(registry.get("mosek"), Err(Error::UnknownStrategy { .. })));
    }
}
