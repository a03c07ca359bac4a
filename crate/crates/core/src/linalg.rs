//! Small dense linear-algebra kernel.
//!
//! Everything here works on `nalgebra` dense storage. Matrices in this crate are
//! at most a few dozen rows, so nothing is sparse and nothing is blocked.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sweep cap for the cyclic Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Off-diagonal Frobenius tolerance (relative to the input's Frobenius norm).
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Column-major stacking, leftmost column first.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra stores column-major already.
    DVector::from_column_slice(m.as_slice())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    let mut out = DMatrix::zeros(p * r, q * s);
    for i in 0..p {
        for j in 0..q {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            out.view_mut((i * r, j * s), (r, s)).copy_from(&(b * aij));
        }
    }
    out
}

/// A square symmetric matrix.
///
/// Construction symmetrizes the input (`½(M + Mᵀ)`), so the stored entries are
/// exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after checking it is square and symmetric up to rounding.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = 1.0 + m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrize(&m))
    }

    /// The symmetric part `He(m) = ½(m + mᵀ)`.
    pub fn symmetrize(m: &DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        Self((m + m.transpose()) * 0.5)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// One eigenvalue with its unit-norm eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DVector<f64>,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns the pairs sorted by ascending eigenvalue. Eigenvectors are
/// orthonormal to rounding, which Jacobi gives for free since it only ever
/// applies plane rotations.
pub fn sym_eig(m: &SymMatrix) -> Result<Vec<EigenPair>> {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let target = JACOBI_TOLERANCE * a.norm();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > target {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|k| EigenPair {
            value: a[(k, k)],
            vector: v.column(k).normalize(),
        })
        .collect();
    pairs.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(pairs)
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

// Applies the rotation J(p, q) as A ← JᵀAJ and V ← VJ.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    // Exact zero keeps the next sweep from chasing rounding noise.
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// The consecutive-difference matrix `B = D ⊗ I_d`, where row `i` of `D` is
/// `(…, −1, 1, …)` with the `−1` in column `i`.
pub fn difference_matrix(count: usize, dim: usize) -> Result<DMatrix<f64>> {
    if count < 2 {
        return Err(Error::InvalidFormationSize(count));
    }
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(kron(&first_difference(count), &DMatrix::identity(dim, dim)))
}

fn first_difference(count: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(count - 1, count);
    for i in 0..count - 1 {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

/// Right pseudoinverse `Bᵀ(BBᵀ)⁻¹` of a matrix with linearly independent rows.
pub fn right_pseudoinverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = b * b.transpose();
    let chol = Cholesky::new(&gram)?;
    let inv = chol.inverse();
    Ok(b.transpose() * inv)
}

/// `B†` for `B = difference_matrix(count, dim)`, computed through a banded
/// Cholesky of the tridiagonal `DDᵀ` (2 on the diagonal, −1 beside it).
pub fn difference_pseudoinverse(count: usize, dim: usize) -> Result<DMatrix<f64>> {
    if count < 2 {
        return Err(Error::InvalidFormationSize(count));
    }
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    let m = count - 1;
    let diag = vec![2.0; m];
    let off = vec![-1.0; m.saturating_sub(1)];
    let (l_diag, l_sub) = tridiagonal_cholesky(&diag, &off)?;

    let mut inv = DMatrix::zeros(m, m);
    for col in 0..m {
        let mut rhs = vec![0.0; m];
        rhs[col] = 1.0;
        let x = tridiagonal_cholesky_solve(&l_diag, &l_sub, rhs);
        inv.set_column(col, &DVector::from_vec(x));
    }
    let d_pinv = first_difference(count).transpose() * inv;
    Ok(kron(&d_pinv, &DMatrix::identity(dim, dim)))
}

// Returns (diagonal, subdiagonal) of L for a symmetric tridiagonal SPD matrix.
fn tridiagonal_cholesky(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = diag.len();
    let mut l_diag = vec![0.0; m];
    let mut l_sub = vec![0.0; m.saturating_sub(1)];
    for i in 0..m {
        let mut pivot = diag[i];
        if i > 0 {
            l_sub[i - 1] = off[i - 1] / l_diag[i - 1];
            pivot -= l_sub[i - 1] * l_sub[i - 1];
        }
        if pivot <= 0.0 {
            return Err(Error::SingularSystem(
                "tridiagonal system is not positive definite".into(),
            ));
        }
        l_diag[i] = pivot.sqrt();
    }
    Ok((l_diag, l_sub))
}

fn tridiagonal_cholesky_solve(l_diag: &[f64], l_sub: &[f64], mut x: Vec<f64>) -> Vec<f64> {
    let m = l_diag.len();
    for i in 0..m {
        if i > 0 {
            x[i] -= l_sub[i - 1] * x[i - 1];
        }
        x[i] /= l_diag[i];
    }
    for i in (0..m).rev() {
        if i + 1 < m {
            x[i] -= l_sub[i] * x[i + 1];
        }
        x[i] /= l_diag[i];
    }
    x
}

/// Dense Cholesky factor `LLᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch("Cholesky needs a square matrix".into()));
        }
        let n = a.nrows();
        let floor = 1e-13 * (1.0 + a.diagonal().amax());
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= floor {
                return Err(Error::SingularSystem(format!(
                    "matrix is not positive definite (pivot {d:.3e} at {j})"
                )));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        let mut inv = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut e = DVector::zeros(n);
            e[col] = 1.0;
            inv.set_column(col, &self.solve(&e));
        }
        inv
    }
}
