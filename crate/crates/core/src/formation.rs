//! Point-charge force model for a formation of `N` spacecraft in `d` dimensions.
//!
//! Positions, thrusts and relative forces are stored stacked: spacecraft `i`
//! owns entries `i*d .. (i+1)*d`. Relative quantities follow the
//! consecutive-difference convention `ΔFᵢ = Fᵢ₊₁ − Fᵢ`.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::linalg;

/// Coulomb's constant, N·m²/C².
pub const K_C: f64 = 8.99e9;

/// Closest allowed approach between two spacecraft, m.
pub const MIN_SEPARATION: f64 = 1e-6;

/// Coulombs per microcoulomb.
pub const MICRO: f64 = 1e-6;

/// Positions of every spacecraft, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationState {
    dim: usize,
    positions: DVector<f64>,
}

impl FormationState {
    /// Builds a state from stacked positions `Col(x₁, …, x_N)`.
    pub fn new(dim: usize, positions: DVector<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if positions.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} position entries is not a multiple of dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("positions must be finite".into()));
        }
        let state = Self { dim, positions };
        let count = state.count();
        if count < 2 {
            return Err(Error::InvalidFormationSize(count));
        }
        for i in 0..count {
            for j in (i + 1)..count {
                let distance = (state.position(i) - state.position(j)).norm();
                if distance < MIN_SEPARATION {
                    return Err(Error::SingularGeometry { i, j, distance });
                }
            }
        }
        Ok(state)
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(
                "all positions must have the same dimension".into(),
            ));
        }
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        Self::new(dim, DVector::from_vec(flat))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of spacecraft.
    pub fn count(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn position(&self, i: usize) -> DVectorView<'_, f64> {
        self.positions.rows(i * self.dim, self.dim)
    }

    pub fn positions(&self) -> &DVector<f64> {
        &self.positions
    }

    /// Relative positions `ξᵢ = xᵢ₊₁ − xᵢ`, stacked.
    pub fn relative_positions(&self) -> DVector<f64> {
        consecutive_differences(&self.positions, self.dim)
    }

    /// Length of a stacked relative vector for this formation.
    pub fn relative_len(&self) -> usize {
        self.dim * (self.count() - 1)
    }

    // (xᵢ − xⱼ)/‖xᵢ − xⱼ‖³
    fn inverse_square_direction(&self, i: usize, j: usize) -> DVector<f64> {
        let r = self.position(i) - self.position(j);
        let dist = r.norm();
        r / (dist * dist * dist)
    }
}

/// Per-spacecraft charges, coulombs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeVector(pub DVector<f64>);

impl ChargeVector {
    pub fn zeros(count: usize) -> Self {
        Self(DVector::zeros(count))
    }

    pub fn from_microcoulombs(values: &[f64]) -> Self {
        Self(DVector::from_iterator(values.len(), values.iter().map(|v| v * MICRO)))
    }

    pub fn to_microcoulombs(&self) -> Vec<f64> {
        self.0.iter().map(|v| v / MICRO).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Per-spacecraft thrust vectors, newtons, stacked.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustVector {
    pub dim: usize,
    pub values: DVector<f64>,
}

impl ThrustVector {
    pub fn zeros(dim: usize, count: usize) -> Self {
        Self { dim, values: DVector::zeros(dim * count) }
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn of(&self, i: usize) -> DVectorView<'_, f64> {
        self.values.rows(i * self.dim, self.dim)
    }

    /// Stacked Euclidean norm `‖T‖`.
    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    /// Sum of per-spacecraft thrust magnitudes `Σᵢ‖Tᵢ‖`.
    pub fn magnitude_sum(&self) -> f64 {
        (0..self.count()).map(|i| self.of(i).norm()).sum()
    }
}

/// Stacked relative forces `Col(ΔF₁, …, ΔF_{N−1})`, newtons.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeForce {
    pub dim: usize,
    pub values: DVector<f64>,
}

impl RelativeForce {
    pub fn new(dim: usize, values: DVector<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 || values.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "relative force of length {} does not fit dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn zeros(dim: usize, count: usize) -> Self {
        Self { dim, values: DVector::zeros(dim * (count - 1)) }
    }

    /// Number of spacecraft this relative vector describes.
    pub fn count(&self) -> usize {
        self.values.len() / self.dim + 1
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    pub fn check_matches(&self, state: &FormationState) -> Result<()> {
        if self.dim != state.dim() || self.values.len() != state.relative_len() {
            return Err(Error::DimensionMismatch(format!(
                "relative force has length {} but the formation needs {}",
                self.values.len(),
                state.relative_len()
            )));
        }
        Ok(())
    }
}

fn consecutive_differences(stacked: &DVector<f64>, dim: usize) -> DVector<f64> {
    let count = stacked.len() / dim;
    DVector::from_fn(dim * (count - 1), |k, _| stacked[k + dim] - stacked[k])
}

fn check_charges(state: &FormationState, q: &ChargeVector) -> Result<()> {
    if q.len() != state.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} charges for {} spacecraft",
            q.len(),
            state.count()
        )));
    }
    if q.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("charges must be finite".into()));
    }
    Ok(())
}

fn check_index(state: &FormationState, i: usize) -> Result<()> {
    if i >= state.count() {
        return Err(Error::InvalidInput(format!(
            "spacecraft index {i} out of range for {} spacecraft",
            state.count()
        )));
    }
    Ok(())
}

/// Net Coulomb force on spacecraft `i` (0-based), by direct pairwise summation.
pub fn coulomb_force_on(i: usize, state: &FormationState, q: &ChargeVector) -> Result<DVector<f64>> {
    check_index(state, i)?;
    check_charges(state, q)?;
    let mut force = DVector::zeros(state.dim());
    for j in 0..state.count() {
        if j != i {
            force += state.inverse_square_direction(i, j) * (K_C * q.0[i] * q.0[j]);
        }
    }
    Ok(force)
}

/// Coulomb forces on every spacecraft, stacked.
pub fn coulomb_forces(state: &FormationState, q: &ChargeVector) -> Result<DVector<f64>> {
    check_charges(state, q)?;
    let dim = state.dim();
    let mut out = DVector::zeros(dim * state.count());
    for i in 0..state.count() {
        out.rows_mut(i * dim, dim).copy_from(&coulomb_force_on(i, state, q)?);
    }
    Ok(out)
}

/// Row map `aᵢ(x)`, a `d × N²` matrix with `F_Cᵢ = k_c aᵢ(x) vec(qqᵀ)`.
///
/// Column `k` of the map multiplies entry `k` of `vec(qqᵀ)`; the pair `(i, j)`
/// contributes half of its direction term to each of the two symmetric slots.
pub fn coulomb_row_map(i: usize, state: &FormationState) -> Result<DMatrix<f64>> {
    check_index(state, i)?;
    let n = state.count();
    let mut a = DMatrix::zeros(state.dim(), n * n);
    for j in 0..n {
        if j == i {
            continue;
        }
        let half = state.inverse_square_direction(i, j) * 0.5;
        for col in [i + j * n, j + i * n] {
            let mut c = a.column_mut(col);
            c += &half;
        }
    }
    Ok(a)
}

/// `A(x) = Col(a₂ − a₁, …, a_N − a_{N−1})`, so that `ΔF_C = k_c A(x) vec(qqᵀ)`.
pub fn relative_coulomb_matrix(state: &FormationState) -> Result<DMatrix<f64>> {
    let n = state.count();
    let dim = state.dim();
    let rows: Vec<DMatrix<f64>> = (0..n).map(|i| coulomb_row_map(i, state)).collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(dim * (n - 1), n * n);
    for i in 0..n - 1 {
        a.rows_mut(i * dim, dim).copy_from(&(&rows[i + 1] - &rows[i]));
    }
    Ok(a)
}

/// Relative Coulomb forces by differencing the pairwise-summed forces.
pub fn relative_coulomb_force(state: &FormationState, q: &ChargeVector) -> Result<RelativeForce> {
    let forces = coulomb_forces(state, q)?;
    RelativeForce::new(state.dim(), consecutive_differences(&forces, state.dim()))
}

/// Relative Coulomb forces through the lifted linear map, `k_c A(x) vec(qqᵀ)`.
pub fn relative_coulomb_force_lifted(state: &FormationState, q: &ChargeVector) -> Result<RelativeForce> {
    check_charges(state, q)?;
    let a = relative_coulomb_matrix(state)?;
    let outer = &q.0 * q.0.transpose();
    RelativeForce::new(state.dim(), a * linalg::vec(&outer) * K_C)
}

/// Relative thruster forces `B T`.
pub fn relative_thrust(t: &ThrustVector) -> Result<RelativeForce> {
    if t.count() < 2 {
        return Err(Error::InvalidFormationSize(t.count()));
    }
    RelativeForce::new(t.dim, consecutive_differences(&t.values, t.dim))
}
